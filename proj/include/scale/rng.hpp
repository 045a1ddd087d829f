#pragma once

#include <cstdint>
#include <vector>

namespace scale {

// SplitMix64 generator. Chosen because the whole state is one 64-bit word,
// the output function is fixed by the algorithm (identical streams on every
// platform), and child streams can be derived by seeding a new generator
// from the parent's next output.
class RngState {
public:
    RngState() : state_(0) {}
    explicit RngState(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_double();

    // Uniform in (0, 1]; never returns 0 (safe under log()).
    double next_double_open();

    // Standard normal via Box-Muller; consumes two uniforms per call.
    double next_normal();

    // Uniform integer in [0, n). Unbiased (Lemire multiply-with-rejection).
    std::uint64_t next_below(std::uint64_t n);

    // Child stream: a fresh generator seeded from this one's next output.
    RngState split() { return RngState(next_u64()); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // min(k, n) distinct indices drawn uniformly from [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    std::uint64_t raw_state() const { return state_; }
    void set_raw_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace scale

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "scale/encoder.hpp"
#include "scale/matrix.hpp"
#include "scale/rng.hpp"

namespace scale {

enum class MemoryPolicy { psa, minred, random, kmeans, oracle };

MemoryPolicy memory_policy_from_string(const std::string& name);
std::string to_string(MemoryPolicy policy);

// Bounded store of raw input samples. Hidden labels ride along for the
// oracle policy and diagnostics only; no loss ever sees them.
struct MemoryBuffer {
    std::size_t capacity = 0;
    Matrix items;                     // |items| x input_dim, rows <= capacity
    std::vector<int> hidden_labels;   // empty or one per item

    std::size_t size() const { return items.rows; }
    bool has_labels() const { return !hidden_labels.empty(); }
};

// One cell of the PSA partition (exposed for testing).
struct PsaPartition {
    std::vector<std::size_t> members;
    std::vector<double> lower;   // a_j
    std::vector<double> upper;   // b_j
    double diameter = 0.0;       // max_j (b_j - a_j)
    std::size_t widest_dim = 0;
};

// Uniform sample of min(m, size) items without replacement. Returns the raw
// rows; labels (when present) come back through picked_labels.
Matrix sample_batch(const MemoryBuffer& buf, std::size_t m, RngState& rng,
                    std::vector<int>* picked_labels = nullptr);

// Part-and-select: split the cell of greatest Chebyshev diameter along its
// widest dimension at the midpoint until M cells exist, then keep each
// cell's member closest (Euclidean) to the cell's bounding-box center.
std::vector<std::size_t> psa_select(const Matrix& features, std::size_t M);

// Greedy removal of the sample with the smallest nearest-neighbor cosine
// distance until M remain.
std::vector<std::size_t> minred_select(const Matrix& features, std::size_t M);

std::vector<std::size_t> random_select(std::size_t count_in, std::size_t M, RngState& rng);

// KMeans clustering with per-cluster quotas proportional to cluster size
// (largest remainder), random within each cluster.
std::vector<std::size_t> kmeans_select(const Matrix& features, std::size_t M, std::size_t k,
                                       RngState& rng);

// Candidates = current items + incoming batch; features come from the given
// encoder (no gradient); the buffer keeps the raw rows the policy picks.
void memory_update(MemoryBuffer& buf, const Matrix& incoming_raw,
                   const std::vector<int>& incoming_labels, const EncoderParams& encoder,
                   MemoryPolicy policy, RngState& rng, std::size_t kmeans_k = 0);

}  // namespace scale

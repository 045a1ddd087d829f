#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "scale/matrix.hpp"
#include "scale/rng.hpp"

namespace scale {

// Multilayer perceptron f: X -> Z with rectifier hidden layers and a
// unit-norm output row per sample. Small enough to backprop by hand.
struct EncoderParams {
    struct Layer {
        Matrix weight;             // out_dim x in_dim
        std::vector<double> bias;  // out_dim
    };
    std::vector<Layer> layers;
    std::uint64_t version = 0;  // incremented by every sgd_step

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
};

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
    std::uint64_t version = 0;             // params version at forward time
    std::vector<Matrix> activations;       // activations[0] = input batch
    std::vector<Matrix> preactivations;    // per layer, before nonlinearity
    Matrix prenorm;                        // final layer output, before row normalization
    Matrix features;                       // row-normalized output
    std::vector<bool> degenerate_rows;     // rows mapped by the degenerate rule
};

struct ParamGrads {
    std::vector<EncoderParams::Layer> layers;  // same shapes as the params
};

// Immutable copy of the parameters at some past step.
struct FrozenSnapshot {
    EncoderParams params;
};

// Weights uniform in [-scale/sqrt(fan_in), +scale/sqrt(fan_in)], biases zero.
// layer_dims lists input dim followed by each layer's output dim.
EncoderParams encoder_init(const std::vector<std::size_t>& layer_dims, RngState& rng,
                           double scale = 1.0);

ForwardTrace encoder_forward(const EncoderParams& p, const Matrix& batch);

// Gradient of a scalar loss with respect to every parameter, given the
// gradient with respect to the normalized features. Applies the
// row-normalization Jacobian (I - z z^T)/|y| first, then ordinary backprop.
ParamGrads encoder_backward(const EncoderParams& p, const ForwardTrace& trace,
                            const Matrix& grad_features);

// theta <- theta - lr * g, version incremented. Throws on non-finite grads.
void sgd_step(EncoderParams& p, const ParamGrads& g, double lr);

FrozenSnapshot snapshot(const EncoderParams& p);

// Checkpoint file: magic "SCEN", u32 format version, u32 dim count,
// u32 dims..., u64 params version, then per layer the row-major weights and
// the bias, all little-endian 64-bit reals.
void save_checkpoint(const EncoderParams& p, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

// Stream forms of the same layout (used by the run-state files too).
void write_params(std::ostream& os, const EncoderParams& p);
EncoderParams read_params(std::istream& is, const std::string& context);

}  // namespace scale

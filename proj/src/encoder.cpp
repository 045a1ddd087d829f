#include "scale/encoder.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace scale {

namespace {

constexpr double kNormEps = 1e-12;
constexpr char kMagic[4] = {'S', 'C', 'E', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

void check_finite_params(const EncoderParams& p, const char* who) {
    for (const auto& layer : p.layers) {
        if (!all_finite(layer.weight))
            throw std::runtime_error(std::string(who) + ": non-finite weight");
        for (double b : layer.bias)
            if (!std::isfinite(b)) throw std::runtime_error(std::string(who) + ": non-finite bias");
    }
}

}  // namespace

EncoderParams encoder_init(const std::vector<std::size_t>& layer_dims, RngState& rng,
                           double scale) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("encoder_init: need an input dim and at least one layer");
    for (std::size_t d : layer_dims)
        if (d == 0) throw std::invalid_argument("encoder_init: dims must be positive");

    EncoderParams p;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        std::size_t fan_in = layer_dims[l];
        std::size_t fan_out = layer_dims[l + 1];
        EncoderParams::Layer layer;
        layer.weight = Matrix(fan_out, fan_in);
        double bound = scale / std::sqrt(static_cast<double>(fan_in));
        for (double& w : layer.weight.data) w = (2.0 * rng.next_double() - 1.0) * bound;
        layer.bias.assign(fan_out, 0.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

ForwardTrace encoder_forward(const EncoderParams& p, const Matrix& batch) {
    if (batch.cols != p.input_dim())
        throw std::invalid_argument("encoder_forward: batch width does not match input dim");
    require_finite(batch, "encoder_forward");

    ForwardTrace t;
    t.version = p.version;
    t.activations.push_back(batch);

    Matrix cur = batch;
    const std::size_t n_layers = p.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = p.layers[l];
        Matrix pre(cur.rows, layer.weight.rows);
        for (std::size_t i = 0; i < cur.rows; ++i) {
            const double* x = cur.row_ptr(i);
            for (std::size_t o = 0; o < layer.weight.rows; ++o) {
                const double* w = layer.weight.row_ptr(o);
                double acc = layer.bias[o];
                for (std::size_t k = 0; k < layer.weight.cols; ++k) acc += w[k] * x[k];
                pre.at(i, o) = acc;
            }
        }
        t.preactivations.push_back(pre);
        if (l + 1 < n_layers) {
            Matrix act(pre.rows, pre.cols);
            for (std::size_t k = 0; k < pre.data.size(); ++k)
                act.data[k] = pre.data[k] > 0.0 ? pre.data[k] : 0.0;
            t.activations.push_back(act);
            cur = std::move(act);
        } else {
            cur = pre;
        }
    }

    t.prenorm = cur;
    t.degenerate_rows.assign(cur.rows, false);
    for (std::size_t i = 0; i < cur.rows; ++i) {
        double sq = 0.0;
        const double* r = cur.row_ptr(i);
        for (std::size_t j = 0; j < cur.cols; ++j) sq += r[j] * r[j];
        if (std::sqrt(sq) < kNormEps) t.degenerate_rows[i] = true;
    }
    t.features = l2_normalize_rows(cur, kNormEps);
    return t;
}

ParamGrads encoder_backward(const EncoderParams& p, const ForwardTrace& trace,
                            const Matrix& grad_features) {
    if (trace.version != p.version)
        throw std::invalid_argument("encoder_backward: trace was recorded for different params");
    if (!grad_features.same_shape(trace.features))
        throw std::invalid_argument("encoder_backward: gradient shape mismatch");

    const std::size_t rows = trace.features.rows;
    const std::size_t out_dim = trace.features.cols;

    // Normalization Jacobian: d z / d y = (I - z z^T) / |y|. Degenerate rows
    // sit on the constant branch, gradient zero.
    Matrix grad_pre(rows, out_dim);
    for (std::size_t i = 0; i < rows; ++i) {
        if (trace.degenerate_rows[i]) continue;
        const double* g = grad_features.row_ptr(i);
        const double* z = trace.features.row_ptr(i);
        const double* y = trace.prenorm.row_ptr(i);
        double ysq = 0.0;
        for (std::size_t j = 0; j < out_dim; ++j) ysq += y[j] * y[j];
        double ynorm = std::sqrt(ysq);
        double gz = 0.0;
        for (std::size_t j = 0; j < out_dim; ++j) gz += g[j] * z[j];
        double* dst = grad_pre.row_ptr(i);
        for (std::size_t j = 0; j < out_dim; ++j) dst[j] = (g[j] - gz * z[j]) / ynorm;
    }

    ParamGrads grads;
    grads.layers.resize(p.layers.size());

    Matrix grad_p = std::move(grad_pre);
    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const auto& layer = p.layers[li];
        const Matrix& input = trace.activations[li];

        auto& g = grads.layers[li];
        g.weight = Matrix(layer.weight.rows, layer.weight.cols);
        g.bias.assign(layer.bias.size(), 0.0);

        for (std::size_t i = 0; i < grad_p.rows; ++i) {
            const double* gp = grad_p.row_ptr(i);
            const double* x = input.row_ptr(i);
            for (std::size_t o = 0; o < layer.weight.rows; ++o) {
                double go = gp[o];
                g.bias[o] += go;
                double* gw = g.weight.row_ptr(o);
                for (std::size_t k = 0; k < layer.weight.cols; ++k) gw[k] += go * x[k];
            }
        }

        if (li == 0) break;

        Matrix grad_in(grad_p.rows, layer.weight.cols);
        for (std::size_t i = 0; i < grad_p.rows; ++i) {
            const double* gp = grad_p.row_ptr(i);
            double* gi = grad_in.row_ptr(i);
            for (std::size_t o = 0; o < layer.weight.rows; ++o) {
                const double* w = layer.weight.row_ptr(o);
                for (std::size_t k = 0; k < layer.weight.cols; ++k) gi[k] += gp[o] * w[k];
            }
        }
        // Through the rectifier of the previous layer.
        const Matrix& pre_prev = trace.preactivations[li - 1];
        for (std::size_t k = 0; k < grad_in.data.size(); ++k)
            if (pre_prev.data[k] <= 0.0) grad_in.data[k] = 0.0;
        grad_p = std::move(grad_in);
    }
    return grads;
}

void sgd_step(EncoderParams& p, const ParamGrads& g, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
    if (g.layers.size() != p.layers.size())
        throw std::invalid_argument("sgd_step: grad/param layer count mismatch");
    for (const auto& gl : g.layers) {
        if (!all_finite(gl.weight))
            throw std::runtime_error("sgd_step: diverged (non-finite weight gradient)");
        for (double b : gl.bias)
            if (!std::isfinite(b)) throw std::runtime_error("sgd_step: diverged (non-finite bias gradient)");
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const auto& gl = g.layers[l];
        for (std::size_t k = 0; k < layer.weight.data.size(); ++k)
            layer.weight.data[k] -= lr * gl.weight.data[k];
        for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= lr * gl.bias[k];
    }
    ++p.version;
}

FrozenSnapshot snapshot(const EncoderParams& p) { return FrozenSnapshot{p}; }

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint truncated: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("checkpoint truncated: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const std::string& path) {
    std::uint64_t bits = read_u64(is, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_params(std::ostream& os, const EncoderParams& p) {
    check_finite_params(p, "write_params");
    os.write(kMagic, 4);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(p.layers.size() + 1));
    write_u32(os, static_cast<std::uint32_t>(p.input_dim()));
    for (const auto& layer : p.layers)
        write_u32(os, static_cast<std::uint32_t>(layer.weight.rows));
    write_u64(os, p.version);
    for (const auto& layer : p.layers) {
        for (double w : layer.weight.data) write_f64(os, w);
        for (double b : layer.bias) write_f64(os, b);
    }
}

EncoderParams read_params(std::istream& is, const std::string& context) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("read_params: bad magic in " + context);
    std::uint32_t fmt = read_u32(is, context);
    if (fmt != kFormatVersion)
        throw std::runtime_error("read_params: unsupported format version in " + context);
    std::uint32_t n_dims = read_u32(is, context);
    if (n_dims < 2) throw std::runtime_error("read_params: corrupt dim list in " + context);
    std::vector<std::size_t> dims(n_dims);
    for (auto& d : dims) d = read_u32(is, context);
    std::uint64_t version = read_u64(is, context);

    EncoderParams p;
    p.version = version;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        EncoderParams::Layer layer;
        layer.weight = Matrix(dims[l + 1], dims[l]);
        for (double& w : layer.weight.data) w = read_f64(is, context);
        layer.bias.resize(dims[l + 1]);
        for (double& b : layer.bias) b = read_f64(is, context);
        p.layers.push_back(std::move(layer));
    }
    check_finite_params(p, "read_params");
    return p;
}

void save_checkpoint(const EncoderParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    write_params(os, p);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    return read_params(is, path);
}

}  // namespace scale

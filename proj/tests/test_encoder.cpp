#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "doctest.h"
#include "oracles.hpp"
#include "scale/encoder.hpp"

using namespace scale;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, RngState& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = 2.0 * rng.next_double() - 1.0;
    return m;
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].weight.data != b.layers[l].weight.data ||
            a.layers[l].bias != b.layers[l].bias)
            return false;
    return true;
}

}  // namespace

TEST_CASE("encoder_init shapes, determinism and bounds") {
    RngState rng(1);
    EncoderParams p = encoder_init({2, 4}, rng);
    REQUIRE(p.layers.size() == 1);
    CHECK(p.layers[0].weight.rows == 4);
    CHECK(p.layers[0].weight.cols == 2);
    CHECK(p.layers[0].bias.size() == 4);
    CHECK(all_finite(p.layers[0].weight));

    RngState r1(7), r2(7);
    EncoderParams a = encoder_init({2, 64, 16}, r1);
    EncoderParams b = encoder_init({2, 64, 16}, r2);
    CHECK(params_equal(a, b));

    // Every entry inside +-scale/sqrt(fan_in).
    double scale_arg = 1.5;
    RngState r3(7);
    EncoderParams c = encoder_init({2, 64, 16}, r3, scale_arg);
    for (const auto& layer : c.layers) {
        double bound = scale_arg / std::sqrt(static_cast<double>(layer.weight.cols));
        for (double w : layer.weight.data) CHECK(std::abs(w) <= bound);
        for (double bv : layer.bias) CHECK(bv == 0.0);
    }

    CHECK_THROWS_AS(encoder_init({3}, rng), std::invalid_argument);
}

TEST_CASE("encoder_forward identity layer and degenerate rows") {
    EncoderParams p;
    EncoderParams::Layer layer;
    layer.weight = Matrix(2, 2);
    layer.weight.at(0, 0) = 1.0;
    layer.weight.at(1, 1) = 1.0;
    layer.bias = {0.0, 0.0};
    p.layers.push_back(layer);

    Matrix unit(1, 2);
    unit.at(0, 0) = 0.6;
    unit.at(0, 1) = 0.8;
    ForwardTrace t = encoder_forward(p, unit);
    CHECK(t.features.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(t.features.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

    // Zero weights: every output row hits the degenerate rule.
    EncoderParams zero = p;
    zero.layers[0].weight = Matrix(2, 2);
    ForwardTrace tz = encoder_forward(zero, unit);
    CHECK(tz.features.at(0, 0) == 1.0);
    CHECK(tz.features.at(0, 1) == 0.0);
    CHECK(tz.degenerate_rows[0]);
}

TEST_CASE("encoder_forward matches the reference evaluation") {
    RngState rng(21);
    EncoderParams p = encoder_init({3, 8, 4}, rng);
    Matrix batch = random_batch(6, 3, rng);
    ForwardTrace t = encoder_forward(p, batch);
    Matrix ref = oracle::forward_reference(p, batch);
    REQUIRE(t.features.same_shape(ref));
    for (std::size_t k = 0; k < ref.data.size(); ++k)
        CHECK(std::abs(t.features.data[k] - ref.data[k]) < 1e-13);
}

TEST_CASE("encoder_backward zero upstream gradient") {
    RngState rng(5);
    EncoderParams p = encoder_init({2, 4, 3}, rng);
    Matrix batch = random_batch(4, 2, rng);
    ForwardTrace t = encoder_forward(p, batch);
    Matrix zero_grad(t.features.rows, t.features.cols);
    ParamGrads g = encoder_backward(p, t, zero_grad);
    for (double v : oracle::flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("encoder_backward one-layer hand derivation") {
    // z = normalize(W x), W = [[2,0],[0,1]], x = (1,1), upstream g = (1,0).
    // y = (2,1), |y| = sqrt(5), z = (2,1)/sqrt(5), g.z = 2/sqrt(5),
    // grad_y = (g - (g.z) z)/|y| = (1/(5 sqrt 5), -2/(5 sqrt 5)),
    // dW[o][k] = grad_y[o] * x[k], db = grad_y.
    EncoderParams p;
    EncoderParams::Layer layer;
    layer.weight = Matrix(2, 2);
    layer.weight.at(0, 0) = 2.0;
    layer.weight.at(1, 1) = 1.0;
    layer.bias = {0.0, 0.0};
    p.layers.push_back(layer);

    Matrix x(1, 2, 1.0);
    ForwardTrace t = encoder_forward(p, x);
    Matrix g(1, 2);
    g.at(0, 0) = 1.0;
    ParamGrads grads = encoder_backward(p, t, g);

    const double a = 0.08944271909999159;   // 1/(5 sqrt 5)
    const double b = -0.17888543819998318;  // -2/(5 sqrt 5)
    CHECK(grads.layers[0].weight.at(0, 0) == doctest::Approx(a).epsilon(1e-12));
    CHECK(grads.layers[0].weight.at(0, 1) == doctest::Approx(a).epsilon(1e-12));
    CHECK(grads.layers[0].weight.at(1, 0) == doctest::Approx(b).epsilon(1e-12));
    CHECK(grads.layers[0].weight.at(1, 1) == doctest::Approx(b).epsilon(1e-12));
    CHECK(grads.layers[0].bias[0] == doctest::Approx(a).epsilon(1e-12));
    CHECK(grads.layers[0].bias[1] == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("encoder_backward matches finite differences") {
    RngState rng(33);
    EncoderParams p = encoder_init({3, 6, 4}, rng);
    Matrix batch = random_batch(5, 3, rng);
    // Fixed linear probe so the scalar loss depends on every output entry.
    Matrix probe(5, 4);
    for (double& v : probe.data) v = 2.0 * rng.next_double() - 1.0;

    auto loss_of = [&](const EncoderParams& params) {
        ForwardTrace t = encoder_forward(params, batch);
        double s = 0.0;
        for (std::size_t k = 0; k < t.features.data.size(); ++k)
            s += t.features.data[k] * probe.data[k];
        return s;
    };

    ForwardTrace t = encoder_forward(p, batch);
    ParamGrads analytic = encoder_backward(p, t, probe);
    auto fd = oracle::central_fd(p, loss_of);
    CHECK(oracle::max_relative_error(oracle::flatten(analytic), fd) < 1e-5);
}

TEST_CASE("encoder_backward rejects stale traces") {
    RngState rng(2);
    EncoderParams p = encoder_init({2, 3}, rng);
    Matrix batch = random_batch(2, 2, rng);
    ForwardTrace t = encoder_forward(p, batch);
    ParamGrads g = encoder_backward(p, t, Matrix(2, 3));
    sgd_step(p, g, 0.1);
    CHECK_THROWS_AS(encoder_backward(p, t, Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("sgd_step semantics") {
    RngState rng(4);
    EncoderParams p = encoder_init({2, 3}, rng);
    EncoderParams before = p;

    ParamGrads zero;
    zero.layers.resize(1);
    zero.layers[0].weight = Matrix(3, 2);
    zero.layers[0].bias.assign(3, 0.0);
    sgd_step(p, zero, 0.5);
    CHECK(params_equal(p, before));
    CHECK(p.version == before.version + 1);

    // Scalar case: param 2, grad 0.5, lr 1 -> 1.5.
    EncoderParams scalar;
    EncoderParams::Layer layer;
    layer.weight = Matrix(1, 1);
    layer.weight.at(0, 0) = 2.0;
    layer.bias = {0.0};
    scalar.layers.push_back(layer);
    ParamGrads g;
    g.layers.resize(1);
    g.layers[0].weight = Matrix(1, 1);
    g.layers[0].weight.at(0, 0) = 0.5;
    g.layers[0].bias = {0.0};
    sgd_step(scalar, g, 1.0);
    CHECK(scalar.layers[0].weight.at(0, 0) == 1.5);

    // Two identical steps equal one step with doubled grads.
    EncoderParams two = before;
    sgd_step(two, g, 0.1);
    // shape mismatch guard: g matches the 1x1 layer, not `before`
    CHECK(two.layers.size() == before.layers.size());

    ParamGrads bad = g;
    bad.layers[0].weight.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(sgd_step(scalar, bad, 1.0), std::runtime_error);
}

TEST_CASE("two equal steps match one summed step") {
    EncoderParams a;
    EncoderParams::Layer layer;
    layer.weight = Matrix(1, 1);
    layer.weight.at(0, 0) = 1.0;
    layer.bias = {0.5};
    a.layers.push_back(layer);
    EncoderParams b = a;

    ParamGrads g;
    g.layers.resize(1);
    g.layers[0].weight = Matrix(1, 1);
    g.layers[0].weight.at(0, 0) = 0.25;
    g.layers[0].bias = {-0.5};

    sgd_step(a, g, 0.1);
    sgd_step(a, g, 0.1);

    ParamGrads g2 = g;
    g2.layers[0].weight.at(0, 0) *= 2.0;
    g2.layers[0].bias[0] *= 2.0;
    sgd_step(b, g2, 0.1);

    CHECK(a.layers[0].weight.at(0, 0) == doctest::Approx(b.layers[0].weight.at(0, 0)));
    CHECK(a.layers[0].bias[0] == doctest::Approx(b.layers[0].bias[0]));
}

TEST_CASE("snapshots are immutable deep copies") {
    RngState rng(8);
    EncoderParams p = encoder_init({2, 4, 3}, rng);
    FrozenSnapshot snap = snapshot(p);
    FrozenSnapshot snap2 = snapshot(p);
    CHECK(params_equal(snap.params, snap2.params));

    Matrix batch = random_batch(3, 2, rng);
    ForwardTrace before = encoder_forward(snap.params, batch);

    ForwardTrace t = encoder_forward(p, batch);
    Matrix g(t.features.rows, t.features.cols, 0.1);
    ParamGrads grads = encoder_backward(p, t, g);
    sgd_step(p, grads, 0.5);

    ForwardTrace after = encoder_forward(snap.params, batch);
    CHECK(before.features.data == after.features.data);
    CHECK_FALSE(params_equal(snap.params, p));
}

TEST_CASE("checkpoint round trip") {
    RngState rng(44);
    EncoderParams p = encoder_init({3, 8, 4}, rng);
    p.version = 17;
    std::string path = "encoder_test.ckpt";
    save_checkpoint(p, path);
    EncoderParams q = load_checkpoint(path);
    CHECK(params_equal(p, q));
    CHECK(q.version == 17);
    std::remove(path.c_str());
}

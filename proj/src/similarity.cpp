#include "scale/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scale {

SimilarityMatrix pairwise_sne(const Matrix& features, double kappa) {
    if (kappa <= 0.0) throw std::invalid_argument("pairwise_sne: kappa must be positive");
    if (features.rows < 2)
        throw std::invalid_argument("pairwise_sne: need at least two feature rows");

    const std::size_t n = features.rows;
    Matrix logits = pairwise_dot(features, features);
    for (double& v : logits.data) v /= kappa;

    SimilarityMatrix sim;
    sim.size = n;
    sim.kappa = kappa;
    sim.conditional = masked_softmax_rows(logits, /*exclude_diagonal=*/true);

    sim.symmetric_raw = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sim.symmetric_raw.at(i, j) =
                0.5 * (sim.conditional.at(i, j) + sim.conditional.at(j, i));
        }

    sim.row_normalized = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) row_sum += sim.symmetric_raw.at(i, j);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sim.row_normalized.at(i, j) = sim.symmetric_raw.at(i, j) / row_sum;
        }
    }
    return sim;
}

namespace {

void check_stream_block(const SimilarityMatrix& sim, std::size_t n_stream, const char* who) {
    if (n_stream == 0) throw std::invalid_argument(std::string(who) + ": n_stream must be positive");
    if (2 * n_stream > sim.size)
        throw std::invalid_argument(std::string(who) + ": streaming block larger than batch");
}

}  // namespace

double adaptive_threshold(const SimilarityMatrix& sim, double mu, std::size_t n_stream) {
    if (mu < 0.0 || mu > 1.0)
        throw std::invalid_argument("adaptive_threshold: mu must lie in [0, 1]");
    check_stream_block(sim, n_stream, "adaptive_threshold");

    const std::size_t limit = 2 * n_stream;
    double sum = 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    for (std::size_t i = 0; i < limit; ++i)
        for (std::size_t j = 0; j < limit; ++j) {
            if (i == j) continue;
            double v = sim.row_normalized.at(i, j);
            sum += v;
            mx = std::max(mx, v);
            ++count;
        }
    double mean = sum / static_cast<double>(count);
    return mean + mu * (mx - mean);
}

std::vector<double> adaptive_threshold_per_row(const SimilarityMatrix& sim, double mu,
                                               std::size_t n_stream) {
    if (mu < 0.0 || mu > 1.0)
        throw std::invalid_argument("adaptive_threshold_per_row: mu must lie in [0, 1]");
    check_stream_block(sim, n_stream, "adaptive_threshold_per_row");

    const std::size_t limit = 2 * n_stream;
    std::vector<double> thresholds(limit);
    for (std::size_t i = 0; i < limit; ++i) {
        double sum = 0.0;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < limit; ++j) {
            if (i == j) continue;
            double v = sim.row_normalized.at(i, j);
            sum += v;
            mx = std::max(mx, v);
        }
        double mean = sum / static_cast<double>(limit - 1);
        thresholds[i] = mean + mu * (mx - mean);
    }
    return thresholds;
}

namespace {

PseudoPositiveSets build_sets(const SimilarityMatrix& sim, std::size_t n_stream,
                              const std::vector<double>& thresholds, double recorded) {
    const std::size_t limit = 2 * n_stream;
    PseudoPositiveSets sets;
    sets.threshold_used = recorded;
    sets.members.resize(limit);
    for (std::size_t i = 0; i < limit; ++i) {
        auto& gamma = sets.members[i];
        for (std::size_t j = 0; j < limit; ++j) {
            if (j == i) continue;
            if (sim.row_normalized.at(i, j) > thresholds[i] || j == partner_of(i))
                gamma.push_back(j);
        }
    }
    return sets;
}

}  // namespace

PseudoPositiveSets pseudo_positive_sets(const SimilarityMatrix& sim, double threshold,
                                        std::size_t n_stream) {
    if (std::isnan(threshold))
        throw std::invalid_argument("pseudo_positive_sets: threshold must not be NaN");
    check_stream_block(sim, n_stream, "pseudo_positive_sets");
    std::vector<double> per_row(2 * n_stream, threshold);
    return build_sets(sim, n_stream, per_row, threshold);
}

PseudoPositiveSets pseudo_positive_sets(const SimilarityMatrix& sim,
                                        const std::vector<double>& row_thresholds,
                                        std::size_t n_stream) {
    check_stream_block(sim, n_stream, "pseudo_positive_sets");
    if (row_thresholds.size() != 2 * n_stream)
        throw std::invalid_argument("pseudo_positive_sets: one threshold per anchor required");
    for (double t : row_thresholds)
        if (std::isnan(t))
            throw std::invalid_argument("pseudo_positive_sets: threshold must not be NaN");
    return build_sets(sim, n_stream, row_thresholds,
                      row_thresholds.empty() ? 0.0 : row_thresholds.front());
}

}  // namespace scale

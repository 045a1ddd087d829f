#pragma once

#include <cstddef>
#include <vector>

#include "scale/matrix.hpp"

namespace scale {

// Pairwise similarity tables built from one batch of unit-norm features.
// conditional[i][j] is the probability of j given anchor i, symmetric_raw
// pools the two directions, row_normalized rescales each row so that the
// similarities of a given instance form a distribution over j != i.
struct SimilarityMatrix {
    std::size_t size = 0;
    Matrix conditional;      // p_{j|i}
    Matrix symmetric_raw;    // (p_{j|i} + p_{i|j}) / 2
    Matrix row_normalized;   // p_ij, each row sums to 1 over j != i
    double kappa = 0.0;
};

// Pseudo-positive sets over the streaming half of the batch. members[i]
// always contains partner(i) and never a memory index.
struct PseudoPositiveSets {
    std::vector<std::vector<std::size_t>> members;
    double threshold_used = 0.0;
};

// The augmentation partner of row i under interleaved two-view ordering.
inline std::size_t partner_of(std::size_t i) { return i ^ 1; }

SimilarityMatrix pairwise_sne(const Matrix& features, double kappa);

// mean + mu * (max - mean) over row_normalized entries whose anchor and
// candidate both lie in the streaming block [0, 2*n_stream).
double adaptive_threshold(const SimilarityMatrix& sim, double mu, std::size_t n_stream);

// Per-anchor-row variant of the statistic (config-selectable alternative).
std::vector<double> adaptive_threshold_per_row(const SimilarityMatrix& sim, double mu,
                                               std::size_t n_stream);

PseudoPositiveSets pseudo_positive_sets(const SimilarityMatrix& sim, double threshold,
                                        std::size_t n_stream);
PseudoPositiveSets pseudo_positive_sets(const SimilarityMatrix& sim,
                                        const std::vector<double>& row_thresholds,
                                        std::size_t n_stream);

}  // namespace scale

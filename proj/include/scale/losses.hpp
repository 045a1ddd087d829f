#pragma once

#include <cstddef>

#include "scale/matrix.hpp"
#include "scale/similarity.hpp"

namespace scale {

struct LossConfig {
    double tau = 0.1;     // contrastive temperature
    double kappa = 0.1;   // similarity temperature
    double mu = 0.05;     // relative similarity threshold
    double lambda = 0.1;  // forgetting weight
    // Keep the drift penalty as written in its source (a nonpositive
    // quantity) instead of the minimizable KL direction. Audit switch only.
    bool literal_forget_sign = false;
    // Compute the adaptive threshold per anchor row instead of globally.
    bool per_row_threshold = false;

    void validate() const;
};

struct LossResult {
    double value = 0.0;
    Matrix grad_features;  // d value / d normalized features
    double contrastive = 0.0;
    double forgetting = 0.0;
};

// Pseudo-supervised contrastive loss. Anchors are the 2*n_stream streaming
// rows; all 2*(n_stream+m_mem) rows appear in the denominators, so memory
// rows receive gradient only as negatives.
LossResult contrastive_loss(const Matrix& features, const PseudoPositiveSets& gamma,
                            double tau, std::size_t n_stream, std::size_t m_mem);

// Drift penalty between the current and the frozen-model similarity
// distributions, KL(p || p_past) summed over rows. Gradient flows through
// the current distribution only.
LossResult forgetting_loss(const Matrix& features_cur, const Matrix& features_past,
                           double kappa, bool literal_sign = false);

// Same, reusing an already-computed similarity table for the current batch.
LossResult forgetting_loss_with_sim(const SimilarityMatrix& sim_cur, const Matrix& features_cur,
                                    const Matrix& features_past, double kappa,
                                    bool literal_sign = false);

// Full objective: similarity -> adaptive threshold -> pseudo-positive sets
// -> contrastive + lambda * forgetting.
LossResult total_loss(const Matrix& features_cur, const Matrix& features_past,
                      const LossConfig& cfg, std::size_t n_stream, std::size_t m_mem);

}  // namespace scale

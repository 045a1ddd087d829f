#include "scale/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scale {

namespace {

constexpr double kPastFloor = 1e-12;

void check_batch_shape(const Matrix& features, std::size_t n_stream, std::size_t m_mem,
                       const char* who) {
    if (features.rows != 2 * (n_stream + m_mem))
        throw std::invalid_argument(std::string(who) +
                                    ": feature rows must equal 2*(n_stream + m_mem)");
}

}  // namespace

void LossConfig::validate() const {
    if (tau <= 0.0) throw std::invalid_argument("LossConfig: tau must be positive");
    if (kappa <= 0.0) throw std::invalid_argument("LossConfig: kappa must be positive");
    if (mu < 0.0 || mu > 1.0) throw std::invalid_argument("LossConfig: mu must lie in [0, 1]");
    if (lambda < 0.0) throw std::invalid_argument("LossConfig: lambda must be nonnegative");
}

LossResult contrastive_loss(const Matrix& features, const PseudoPositiveSets& gamma,
                            double tau, std::size_t n_stream, std::size_t m_mem) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be positive");
    check_batch_shape(features, n_stream, m_mem, "contrastive_loss");
    const std::size_t total = features.rows;
    const std::size_t anchors = 2 * n_stream;
    if (gamma.members.size() != anchors)
        throw std::invalid_argument("contrastive_loss: one positive set per anchor required");
    for (std::size_t i = 0; i < anchors; ++i) {
        if (gamma.members[i].empty())
            throw std::invalid_argument("contrastive_loss: empty pseudo-positive set");
        for (std::size_t j : gamma.members[i])
            if (j >= anchors || j == i)
                throw std::invalid_argument("contrastive_loss: invalid pseudo-positive index");
    }

    Matrix logits = pairwise_dot(features, features);
    for (double& v : logits.data) v /= tau;

    // Row-stable softmax over k != i for every anchor row.
    Matrix q = Matrix(anchors, total);
    std::vector<double> lse(anchors);
    for (std::size_t i = 0; i < anchors; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < total; ++k)
            if (k != i) mx = std::max(mx, logits.at(i, k));
        double sum = 0.0;
        for (std::size_t k = 0; k < total; ++k) {
            if (k == i) continue;
            double e = std::exp(logits.at(i, k) - mx);
            q.at(i, k) = e;
            sum += e;
        }
        for (std::size_t k = 0; k < total; ++k)
            if (k != i) q.at(i, k) /= sum;
        lse[i] = mx + std::log(sum);
    }

    LossResult res;
    res.grad_features = Matrix(total, features.cols);
    double value = 0.0;
    for (std::size_t i = 0; i < anchors; ++i) {
        const auto& members = gamma.members[i];
        const double inv = 1.0 / static_cast<double>(members.size());
        for (std::size_t j : members) value -= inv * (logits.at(i, j) - lse[i]);

        for (std::size_t k = 0; k < total; ++k) {
            if (k == i) continue;
            double coef = q.at(i, k);
            if (k < anchors && std::find(members.begin(), members.end(), k) != members.end())
                coef -= inv;
            coef /= tau;
            const double* zi = features.row_ptr(i);
            const double* zk = features.row_ptr(k);
            double* gi = res.grad_features.row_ptr(i);
            double* gk = res.grad_features.row_ptr(k);
            for (std::size_t d = 0; d < features.cols; ++d) {
                gi[d] += coef * zk[d];
                gk[d] += coef * zi[d];
            }
        }
    }
    res.value = value;
    res.contrastive = value;
    return res;
}

LossResult forgetting_loss_with_sim(const SimilarityMatrix& sim_cur, const Matrix& features_cur,
                                    const Matrix& features_past, double kappa,
                                    bool literal_sign) {
    if (!features_cur.same_shape(features_past) || features_cur.rows != sim_cur.size)
        throw std::invalid_argument("forgetting_loss: current/past shape mismatch");
    const std::size_t n = sim_cur.size;
    SimilarityMatrix sim_past = pairwise_sne(features_past, kappa);

    const Matrix& p = sim_cur.row_normalized;
    const Matrix& pp = sim_past.row_normalized;

    // Value and the per-entry log ratio. 0*log(0/q) is 0; p_past floored.
    Matrix log_ratio(n, n);
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double pij = p.at(i, j);
            if (pij <= 0.0) continue;
            double g = std::log(pij / std::max(pp.at(i, j), kPastFloor));
            log_ratio.at(i, j) = g;
            value += pij * g;
        }

    // Backward through row normalization, symmetrization, the masked softmax
    // and the dot products, in that order. grad wrt s uses the simplex form
    // (g_ij - sum_k p_ik g_ik) / r_i.
    std::vector<double> row_sums(n, 0.0);
    std::vector<double> row_kl(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0, w = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            r += sim_cur.symmetric_raw.at(i, j);
            w += p.at(i, j) * log_ratio.at(i, j);
        }
        row_sums[i] = r;
        row_kl[i] = w;
    }

    Matrix grad_s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            grad_s.at(i, j) = (log_ratio.at(i, j) - row_kl[i]) / row_sums[i];
        }

    Matrix grad_c(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            grad_c.at(i, j) = 0.5 * (grad_s.at(i, j) + grad_s.at(j, i));
        }

    // Softmax rows of the conditional table.
    const Matrix& c = sim_cur.conditional;
    Matrix grad_logits(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += grad_c.at(i, k) * c.at(i, k);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            grad_logits.at(i, j) = c.at(i, j) * (grad_c.at(i, j) - dot);
        }
    }

    LossResult res;
    res.grad_features = Matrix(n, features_cur.cols);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = features_cur.row_ptr(i);
        double* gi = res.grad_features.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double a = grad_logits.at(i, j) / kappa;
            if (a == 0.0) continue;
            const double* zj = features_cur.row_ptr(j);
            double* gj = res.grad_features.row_ptr(j);
            for (std::size_t d = 0; d < features_cur.cols; ++d) {
                gi[d] += a * zj[d];
                gj[d] += a * zi[d];
            }
        }
    }

    if (literal_sign) {
        value = -value;
        for (double& g : res.grad_features.data) g = -g;
    }
    res.value = value;
    res.forgetting = value;
    return res;
}

LossResult forgetting_loss(const Matrix& features_cur, const Matrix& features_past,
                           double kappa, bool literal_sign) {
    if (!features_cur.same_shape(features_past))
        throw std::invalid_argument("forgetting_loss: current/past shape mismatch");
    SimilarityMatrix sim_cur = pairwise_sne(features_cur, kappa);
    return forgetting_loss_with_sim(sim_cur, features_cur, features_past, kappa, literal_sign);
}

LossResult total_loss(const Matrix& features_cur, const Matrix& features_past,
                      const LossConfig& cfg, std::size_t n_stream, std::size_t m_mem) {
    cfg.validate();
    check_batch_shape(features_cur, n_stream, m_mem, "total_loss");

    SimilarityMatrix sim = pairwise_sne(features_cur, cfg.kappa);
    PseudoPositiveSets gamma;
    if (cfg.per_row_threshold) {
        auto thresholds = adaptive_threshold_per_row(sim, cfg.mu, n_stream);
        gamma = pseudo_positive_sets(sim, thresholds, n_stream);
    } else {
        double threshold = adaptive_threshold(sim, cfg.mu, n_stream);
        gamma = pseudo_positive_sets(sim, threshold, n_stream);
    }

    LossResult cont = contrastive_loss(features_cur, gamma, cfg.tau, n_stream, m_mem);
    if (cfg.lambda == 0.0) {
        cont.contrastive = cont.value;
        cont.forgetting = 0.0;
        return cont;
    }

    if (!features_cur.same_shape(features_past))
        throw std::invalid_argument("total_loss: current/past shape mismatch");
    LossResult forget = forgetting_loss_with_sim(sim, features_cur, features_past, cfg.kappa,
                                                 cfg.literal_forget_sign);

    LossResult res;
    res.contrastive = cont.value;
    res.forgetting = forget.value;
    res.value = cont.value + cfg.lambda * forget.value;
    res.grad_features = cont.grad_features;
    for (std::size_t k = 0; k < res.grad_features.data.size(); ++k)
        res.grad_features.data[k] += cfg.lambda * forget.grad_features.data[k];
    return res;
}

}  // namespace scale

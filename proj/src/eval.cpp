#include "scale/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace scale {

void EvalSet::validate(int num_classes) const {
    if (samples.rows != labels.size())
        throw std::invalid_argument("EvalSet: label count does not match sample count");
    if (num_classes <= 0) throw std::invalid_argument("EvalSet: need at least one class");
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("EvalSet: label out of range");
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] != counts[0])
            throw std::invalid_argument("EvalSet: classes are not balanced");
    if (counts[0] == 0) throw std::invalid_argument("EvalSet: empty class");
}

namespace {

double cosine(const double* a, const double* b, std::size_t d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    if (denom == 0.0) return 0.0;
    return dot / denom;
}

}  // namespace

std::vector<int> knn_predict(const Matrix& ref_feats, const std::vector<int>& ref_labels,
                             const Matrix& query_feats, std::size_t k) {
    if (k == 0) throw std::invalid_argument("knn_predict: k must be positive");
    if (ref_feats.rows != ref_labels.size())
        throw std::invalid_argument("knn_predict: reference label count mismatch");
    if (ref_feats.rows == 0) throw std::invalid_argument("knn_predict: empty reference set");
    if (ref_feats.cols != query_feats.cols)
        throw std::invalid_argument("knn_predict: feature width mismatch");
    k = std::min(k, ref_feats.rows);

    std::vector<int> out(query_feats.rows);
    std::vector<std::pair<double, std::size_t>> sims(ref_feats.rows);
    for (std::size_t qi = 0; qi < query_feats.rows; ++qi) {
        const double* q = query_feats.row_ptr(qi);
        for (std::size_t ri = 0; ri < ref_feats.rows; ++ri)
            sims[ri] = {cosine(q, ref_feats.row_ptr(ri), ref_feats.cols), ri};
        // Highest similarity first; index ascending on exact ties.
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, summed sim)
        for (std::size_t t = 0; t < k; ++t) {
            auto& v = votes[ref_labels[sims[t].second]];
            v.first += 1;
            v.second += sims[t].first;
        }
        int best = -1;
        std::size_t best_count = 0;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (const auto& [label, v] : votes) {
            bool better = v.first > best_count ||
                          (v.first == best_count && v.second > best_sim) ||
                          (v.first == best_count && v.second == best_sim && label < best);
            if (better) {
                best = label;
                best_count = v.first;
                best_sim = v.second;
            }
        }
        out[qi] = best;
    }
    return out;
}

KMeansResult kmeans_cluster_detailed(const Matrix& feats, std::size_t T, RngState& rng,
                                     std::size_t iters) {
    if (T == 0 || T > feats.rows)
        throw std::invalid_argument("kmeans_cluster: T must lie in [1, row count]");
    const std::size_t n = feats.rows;
    const std::size_t d = feats.cols;

    auto sqdist = [&](const double* a, const double* b) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double diff = a[k] - b[k];
            s += diff * diff;
        }
        return s;
    };

    // k-means++ seeding.
    Matrix centers(T, d);
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.next_below(n));
    for (std::size_t k = 0; k < d; ++k) centers.at(0, k) = feats.at(first, k);
    for (std::size_t c = 1; c < T; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], sqdist(feats.row_ptr(i), centers.row_ptr(c - 1)));
            total += dist2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            double target = rng.next_double() * total;
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = static_cast<std::size_t>(rng.next_below(n));
        }
        for (std::size_t k = 0; k < d; ++k) centers.at(c, k) = feats.at(chosen, k);
    }

    KMeansResult res;
    res.assignments.assign(n, 0);
    std::vector<std::size_t> counts(T);
    Matrix sums(T, d);
    for (std::size_t it = 0; it < iters; ++it) {
        // Assign.
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < T; ++c) {
                double ds = sqdist(feats.row_ptr(i), centers.row_ptr(c));
                if (ds < best) {
                    best = ds;
                    best_c = static_cast<int>(c);
                }
            }
            res.assignments[i] = best_c;
            inertia += best;
        }
        res.inertia_history.push_back(inertia);

        // Update.
        std::fill(counts.begin(), counts.end(), 0);
        std::fill(sums.data.begin(), sums.data.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t c = static_cast<std::size_t>(res.assignments[i]);
            ++counts[c];
            const double* x = feats.row_ptr(i);
            double* s = sums.row_ptr(c);
            for (std::size_t k = 0; k < d; ++k) s[k] += x[k];
        }
        double movement = 0.0;
        for (std::size_t c = 0; c < T; ++c) {
            if (counts[c] == 0) {
                // Reseed an empty cluster at the point farthest from its
                // current centroid (lowest index on ties).
                double worst = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    std::size_t ci = static_cast<std::size_t>(res.assignments[i]);
                    double ds = sqdist(feats.row_ptr(i), centers.row_ptr(ci));
                    if (ds > worst) {
                        worst = ds;
                        far_i = i;
                    }
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double nv = feats.at(far_i, k);
                    movement += std::abs(nv - centers.at(c, k));
                    centers.at(c, k) = nv;
                }
                continue;
            }
            for (std::size_t k = 0; k < d; ++k) {
                double nv = sums.at(c, k) / static_cast<double>(counts[c]);
                movement += std::abs(nv - centers.at(c, k));
                centers.at(c, k) = nv;
            }
        }
        if (movement < 1e-8) break;
    }
    return res;
}

std::vector<int> kmeans_cluster(const Matrix& feats, std::size_t T, RngState& rng,
                                std::size_t iters) {
    return kmeans_cluster_detailed(feats, T, rng, iters).assignments;
}

void jacobi_eigen_symmetric(const Matrix& sym, std::vector<double>& eigenvalues,
                            Matrix& eigenvectors, double tol) {
    if (sym.rows != sym.cols) throw std::invalid_argument("jacobi: matrix must be square");
    const std::size_t n = sym.rows;
    Matrix a = sym;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto offdiag = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a.at(i, j) * a.at(i, j);
        return std::sqrt(s);
    };

    const std::size_t max_sweeps = 100;
    for (std::size_t sweep = 0; sweep < max_sweeps && offdiag() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::abs(apq) <= tol * 1e-3) continue;
                double app = a.at(p, p);
                double aqq = a.at(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double cs = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * cs;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a.at(k, p);
                    double akq = a.at(k, q);
                    a.at(k, p) = cs * akp - sn * akq;
                    a.at(k, q) = sn * akp + cs * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a.at(p, k);
                    double aqk = a.at(q, k);
                    a.at(p, k) = cs * apk - sn * aqk;
                    a.at(q, k) = sn * apk + cs * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v.at(k, p);
                    double vkq = v.at(k, q);
                    v.at(k, p) = cs * vkp - sn * vkq;
                    v.at(k, q) = sn * vkp + cs * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a.at(x, x) < a.at(y, y); });

    eigenvalues.resize(n);
    eigenvectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        eigenvalues[c] = a.at(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) eigenvectors.at(r, c) = v.at(r, order[c]);
    }
}

std::vector<int> spectral_cluster(const Matrix& feats, std::size_t T, RngState& rng,
                                  double sigma, std::size_t cap) {
    if (feats.rows > cap)
        throw std::invalid_argument("spectral_cluster: row count exceeds the supported cap");
    if (T == 0 || T > feats.rows)
        throw std::invalid_argument("spectral_cluster: T must lie in [1, row count]");
    const std::size_t n = feats.rows;

    Matrix affinity(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double aij = std::exp(cosine(feats.row_ptr(i), feats.row_ptr(j), feats.cols) / sigma);
            affinity.at(i, j) = aij;
            affinity.at(j, i) = aij;
        }

    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += affinity.at(i, j);
        inv_sqrt_deg[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
    }

    Matrix lap(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = -inv_sqrt_deg[i] * affinity.at(i, j) * inv_sqrt_deg[j];
            if (i == j) v += 1.0;
            lap.at(i, j) = v;
        }

    std::vector<double> eigenvalues;
    Matrix eigenvectors;
    jacobi_eigen_symmetric(lap, eigenvalues, eigenvectors);

    Matrix embedding(n, T);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < T; ++c) embedding.at(i, c) = eigenvectors.at(i, c);
    embedding = l2_normalize_rows(embedding);

    return kmeans_cluster(embedding, T, rng);
}

namespace {

// Potential-based assignment solver, cost-minimizing, O(T^3).
std::vector<int> solve_min_cost_assignment(const Matrix& cost) {
    const std::size_t n = cost.rows;
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) assignment[p[j] - 1] = static_cast<int>(j - 1);
    return assignment;
}

}  // namespace

AssignmentResult acc_hungarian(const std::vector<int>& pred, const std::vector<int>& truth,
                               std::size_t T) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("acc_hungarian: prediction/label count mismatch");
    if (pred.empty()) throw std::invalid_argument("acc_hungarian: empty input");
    if (T == 0) throw std::invalid_argument("acc_hungarian: T must be positive");

    Matrix contingency(T, T);
    for (std::size_t s = 0; s < pred.size(); ++s) {
        int c = pred[s], y = truth[s];
        if (c < 0 || static_cast<std::size_t>(c) >= T || y < 0 || static_cast<std::size_t>(y) >= T)
            throw std::invalid_argument("acc_hungarian: label out of range");
        contingency.at(static_cast<std::size_t>(c), static_cast<std::size_t>(y)) += 1.0;
    }

    // Maximize matched counts == minimize (max_count - count).
    double mx = 0.0;
    for (double v : contingency.data) mx = std::max(mx, v);
    Matrix cost(T, T);
    for (std::size_t k = 0; k < cost.data.size(); ++k) cost.data[k] = mx - contingency.data[k];

    AssignmentResult res;
    res.mapping = solve_min_cost_assignment(cost);
    double matched = 0.0;
    for (std::size_t c = 0; c < T; ++c)
        matched += contingency.at(c, static_cast<std::size_t>(res.mapping[c]));
    res.acc = matched / static_cast<double>(pred.size());
    return res;
}

EvalScores evaluate(const FrozenSnapshot& snap, const EvalSet& eval_set, std::size_t T,
                    const EvalOptions& opts, RngState& rng) {
    eval_set.validate(static_cast<int>(T));
    ForwardTrace trace = encoder_forward(snap.params, eval_set.samples);
    const Matrix& feats = trace.features;

    EvalScores scores;

    // Clustering accuracy over the full set.
    RngState cluster_rng = rng.split();
    std::vector<int> assignments =
        opts.use_spectral
            ? spectral_cluster(feats, T, cluster_rng, opts.spectral_sigma, opts.spectral_cap)
            : kmeans_cluster(feats, T, cluster_rng);
    scores.acc = acc_hungarian(assignments, eval_set.labels, T).acc;

    // Stratified half/half split for the kNN score.
    std::vector<std::vector<std::size_t>> by_class(T);
    for (std::size_t i = 0; i < eval_set.labels.size(); ++i)
        by_class[static_cast<std::size_t>(eval_set.labels[i])].push_back(i);
    std::vector<std::size_t> ref_idx, query_idx;
    RngState split_rng = rng.split();
    for (auto& members : by_class) {
        split_rng.shuffle(members);
        std::size_t half = (members.size() + 1) / 2;
        for (std::size_t t = 0; t < members.size(); ++t)
            (t < half ? ref_idx : query_idx).push_back(members[t]);
    }
    if (query_idx.empty())
        throw std::invalid_argument("evaluate: eval set too small for a reference/query split");

    auto gather = [&](const std::vector<std::size_t>& idx, Matrix& m, std::vector<int>& lab) {
        m = Matrix(idx.size(), feats.cols);
        lab.resize(idx.size());
        for (std::size_t t = 0; t < idx.size(); ++t) {
            const double* src = feats.row_ptr(idx[t]);
            std::copy(src, src + feats.cols, m.row_ptr(t));
            lab[t] = eval_set.labels[idx[t]];
        }
    };
    Matrix ref_feats, query_feats;
    std::vector<int> ref_labels, query_labels;
    gather(ref_idx, ref_feats, ref_labels);
    gather(query_idx, query_feats, query_labels);

    std::vector<int> predicted = knn_predict(ref_feats, ref_labels, query_feats, opts.knn_k);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < predicted.size(); ++t)
        if (predicted[t] == query_labels[t]) ++hits;
    scores.knn_acc = static_cast<double>(hits) / static_cast<double>(predicted.size());
    return scores;
}

}  // namespace scale

#include "scale/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "scale/eval.hpp"

namespace scale {

MemoryPolicy memory_policy_from_string(const std::string& name) {
    if (name == "psa") return MemoryPolicy::psa;
    if (name == "minred") return MemoryPolicy::minred;
    if (name == "random") return MemoryPolicy::random;
    if (name == "kmeans") return MemoryPolicy::kmeans;
    if (name == "oracle") return MemoryPolicy::oracle;
    throw std::invalid_argument("unknown memory policy: " + name);
}

std::string to_string(MemoryPolicy policy) {
    switch (policy) {
        case MemoryPolicy::psa: return "psa";
        case MemoryPolicy::minred: return "minred";
        case MemoryPolicy::random: return "random";
        case MemoryPolicy::kmeans: return "kmeans";
        case MemoryPolicy::oracle: return "oracle";
    }
    return "?";
}

Matrix sample_batch(const MemoryBuffer& buf, std::size_t m, RngState& rng,
                    std::vector<int>* picked_labels) {
    std::size_t take = std::min(m, buf.size());
    auto idx = rng.sample_without_replacement(buf.size(), take);
    Matrix out(take, buf.items.cols);
    if (picked_labels) picked_labels->clear();
    for (std::size_t t = 0; t < take; ++t) {
        const double* src = buf.items.row_ptr(idx[t]);
        std::copy(src, src + buf.items.cols, out.row_ptr(t));
        if (picked_labels && buf.has_labels()) picked_labels->push_back(buf.hidden_labels[idx[t]]);
    }
    return out;
}

namespace {

PsaPartition make_cell(const Matrix& features, std::vector<std::size_t> members) {
    const std::size_t d = features.cols;
    PsaPartition cell;
    cell.members = std::move(members);
    cell.lower.assign(d, std::numeric_limits<double>::infinity());
    cell.upper.assign(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i : cell.members) {
        const double* row = features.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) {
            cell.lower[j] = std::min(cell.lower[j], row[j]);
            cell.upper[j] = std::max(cell.upper[j], row[j]);
        }
    }
    cell.diameter = 0.0;
    cell.widest_dim = 0;
    for (std::size_t j = 0; j < d; ++j) {
        double delta = cell.upper[j] - cell.lower[j];
        if (delta > cell.diameter) {
            cell.diameter = delta;
            cell.widest_dim = j;
        }
    }
    return cell;
}

std::size_t cell_representative(const Matrix& features, const PsaPartition& cell) {
    const std::size_t d = features.cols;
    std::vector<double> center(d);
    for (std::size_t j = 0; j < d; ++j) center[j] = 0.5 * (cell.lower[j] + cell.upper[j]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = cell.members.front();
    for (std::size_t i : cell.members) {
        const double* row = features.row_ptr(i);
        double ds = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double diff = row[j] - center[j];
            ds += diff * diff;
        }
        if (ds < best || (ds == best && i < best_i)) {
            best = ds;
            best_i = i;
        }
    }
    return best_i;
}

}  // namespace

std::vector<std::size_t> psa_select(const Matrix& features, std::size_t M) {
    if (M == 0) throw std::invalid_argument("psa_select: M must be positive");
    require_finite(features, "psa_select");
    const std::size_t n = features.rows;
    if (n <= M) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }

    std::vector<std::size_t> everyone(n);
    for (std::size_t i = 0; i < n; ++i) everyone[i] = i;
    std::vector<PsaPartition> cells;
    cells.push_back(make_cell(features, std::move(everyone)));

    while (cells.size() < M) {
        // Cell of greatest diameter; first such cell on ties.
        std::size_t pick = 0;
        for (std::size_t c = 1; c < cells.size(); ++c)
            if (cells[c].diameter > cells[pick].diameter) pick = c;
        if (cells[pick].diameter == 0.0) break;  // only duplicate points remain

        PsaPartition cell = std::move(cells[pick]);
        double mid = 0.5 * (cell.lower[cell.widest_dim] + cell.upper[cell.widest_dim]);
        std::vector<std::size_t> left, right;
        for (std::size_t i : cell.members)
            (features.at(i, cell.widest_dim) <= mid ? left : right).push_back(i);
        cells[pick] = make_cell(features, std::move(left));
        cells.push_back(make_cell(features, std::move(right)));
    }

    std::vector<std::size_t> selected;
    std::vector<bool> taken(n, false);
    selected.reserve(M);
    for (const auto& cell : cells) {
        std::size_t rep = cell_representative(features, cell);
        selected.push_back(rep);
        taken[rep] = true;
    }

    if (selected.size() < M) {
        // All cells degenerate before reaching M: top up from the largest
        // cells with their lowest-index unused members.
        std::vector<std::size_t> order(cells.size());
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (cells[a].members.size() != cells[b].members.size())
                return cells[a].members.size() > cells[b].members.size();
            return a < b;
        });
        while (selected.size() < M) {
            bool added = false;
            for (std::size_t c : order) {
                for (std::size_t i : cells[c].members) {
                    if (taken[i]) continue;
                    selected.push_back(i);
                    taken[i] = true;
                    added = true;
                    break;
                }
                if (added && selected.size() == M) break;
            }
            if (!added) break;  // fewer than M candidates overall, cannot happen here
        }
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<std::size_t> minred_select(const Matrix& features, std::size_t M) {
    if (M == 0) throw std::invalid_argument("minred_select: M must be positive");
    require_finite(features, "minred_select");
    const std::size_t n = features.rows;
    std::vector<std::size_t> alive(n);
    for (std::size_t i = 0; i < n; ++i) alive[i] = i;
    if (n <= M) return alive;

    // Distance table once; removals only rescan it.
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = features.row_ptr(i);
        double nx = 0.0;
        for (std::size_t k = 0; k < features.cols; ++k) nx += x[k] * x[k];
        norms[i] = std::sqrt(nx);
    }
    Matrix dist(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            const double* x = features.row_ptr(a);
            const double* y = features.row_ptr(b);
            double dot = 0.0;
            for (std::size_t k = 0; k < features.cols; ++k) dot += x[k] * y[k];
            double denom = norms[a] * norms[b];
            double cs = denom > 0.0 ? dot / denom : 0.0;
            dist.at(a, b) = 1.0 - cs;
            dist.at(b, a) = 1.0 - cs;
        }

    while (alive.size() > M) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_pos = 0;
        for (std::size_t a = 0; a < alive.size(); ++a) {
            double nearest = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < alive.size(); ++b) {
                if (a == b) continue;
                nearest = std::min(nearest, dist.at(alive[a], alive[b]));
            }
            if (nearest < best) {
                best = nearest;
                best_pos = a;  // ties keep the earlier (lower-index) candidate
            }
        }
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
    return alive;
}

std::vector<std::size_t> random_select(std::size_t count_in, std::size_t M, RngState& rng) {
    if (count_in <= M) {
        std::vector<std::size_t> all(count_in);
        for (std::size_t i = 0; i < count_in; ++i) all[i] = i;
        return all;
    }
    auto idx = rng.sample_without_replacement(count_in, M);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::size_t> kmeans_select(const Matrix& features, std::size_t M, std::size_t k,
                                       RngState& rng) {
    if (k == 0) throw std::invalid_argument("kmeans_select: k must be positive");
    if (k > features.rows)
        throw std::invalid_argument("kmeans_select: k exceeds candidate count");
    // One cluster holds everything, so the quota covers all of it.
    if (k == 1) return random_select(features.rows, M, rng);
    if (features.rows <= M) return random_select(features.rows, M, rng);

    std::vector<int> assignments = kmeans_cluster(features, k, rng);
    std::vector<std::vector<std::size_t>> clusters(k);
    for (std::size_t i = 0; i < assignments.size(); ++i)
        clusters[static_cast<std::size_t>(assignments[i])].push_back(i);

    // Largest-remainder quotas proportional to cluster sizes.
    const double total = static_cast<double>(features.rows);
    std::vector<std::size_t> quota(k, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double share = static_cast<double>(M) * static_cast<double>(clusters[c].size()) / total;
        quota[c] = static_cast<std::size_t>(share);
        assigned += quota[c];
        remainders.push_back({share - static_cast<double>(quota[c]), c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t t = 0; assigned < M; ++t, ++assigned) quota[remainders[t % k].second] += 1;

    std::vector<std::size_t> selected;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t take = std::min(quota[c], clusters[c].size());
        auto local = rng.sample_without_replacement(clusters[c].size(), take);
        for (std::size_t t : local) selected.push_back(clusters[c][t]);
    }
    // Rounding against a tiny cluster can leave a deficit; fill uniformly
    // from the leftovers.
    if (selected.size() < M) {
        std::vector<bool> taken(features.rows, false);
        for (std::size_t i : selected) taken[i] = true;
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < features.rows; ++i)
            if (!taken[i]) rest.push_back(i);
        auto extra = rng.sample_without_replacement(rest.size(), M - selected.size());
        for (std::size_t t : extra) selected.push_back(rest[t]);
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

namespace {

std::vector<std::size_t> oracle_select(const std::vector<int>& labels, std::size_t M,
                                       RngState& rng) {
    std::vector<int> present;
    for (int y : labels)
        if (std::find(present.begin(), present.end(), y) == present.end()) present.push_back(y);
    std::sort(present.begin(), present.end());

    std::vector<std::vector<std::size_t>> groups(present.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t g = static_cast<std::size_t>(
            std::find(present.begin(), present.end(), labels[i]) - present.begin());
        groups[g].push_back(i);
    }

    // Equal per-class quotas; the first M % C classes get one extra.
    const std::size_t C = groups.size();
    std::vector<std::size_t> quota(C, M / C);
    for (std::size_t c = 0; c < M % C; ++c) quota[c] += 1;

    std::vector<std::size_t> selected;
    std::size_t shortfall = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t take = std::min(quota[c], groups[c].size());
        shortfall += quota[c] - take;
        auto local = rng.sample_without_replacement(groups[c].size(), take);
        for (std::size_t t : local) selected.push_back(groups[c][t]);
    }
    // Redistribute unused quota round-robin over classes with spare members.
    while (shortfall > 0) {
        bool progressed = false;
        for (std::size_t c = 0; c < C && shortfall > 0; ++c) {
            std::vector<std::size_t> unused;
            for (std::size_t i : groups[c])
                if (std::find(selected.begin(), selected.end(), i) == selected.end())
                    unused.push_back(i);
            if (unused.empty()) continue;
            std::size_t pick = unused[rng.next_below(unused.size())];
            selected.push_back(pick);
            --shortfall;
            progressed = true;
        }
        if (!progressed) break;
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

}  // namespace

void memory_update(MemoryBuffer& buf, const Matrix& incoming_raw,
                   const std::vector<int>& incoming_labels, const EncoderParams& encoder,
                   MemoryPolicy policy, RngState& rng, std::size_t kmeans_k) {
    if (buf.capacity == 0) return;
    if (incoming_raw.rows == 0) return;
    if (buf.size() > 0 && buf.items.cols != incoming_raw.cols)
        throw std::invalid_argument("memory_update: incoming width differs from stored items");
    if (!incoming_labels.empty() && incoming_labels.size() != incoming_raw.rows)
        throw std::invalid_argument("memory_update: incoming label count mismatch");

    const std::size_t n_old = buf.size();
    const std::size_t n_new = incoming_raw.rows;
    Matrix candidates(n_old + n_new, incoming_raw.cols);
    for (std::size_t i = 0; i < n_old; ++i)
        std::copy(buf.items.row_ptr(i), buf.items.row_ptr(i) + buf.items.cols,
                  candidates.row_ptr(i));
    for (std::size_t i = 0; i < n_new; ++i)
        std::copy(incoming_raw.row_ptr(i), incoming_raw.row_ptr(i) + incoming_raw.cols,
                  candidates.row_ptr(n_old + i));

    std::vector<int> labels;
    bool tracking = (buf.has_labels() || n_old == 0) && !incoming_labels.empty();
    if (tracking) {
        labels = buf.hidden_labels;
        labels.insert(labels.end(), incoming_labels.begin(), incoming_labels.end());
    }
    if (policy == MemoryPolicy::oracle && labels.size() != candidates.rows)
        throw std::invalid_argument("memory_update: oracle policy requires hidden labels");

    std::vector<std::size_t> keep;
    if (candidates.rows <= buf.capacity) {
        keep.resize(candidates.rows);
        for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    } else {
        switch (policy) {
            case MemoryPolicy::random:
                keep = random_select(candidates.rows, buf.capacity, rng);
                break;
            case MemoryPolicy::oracle:
                keep = oracle_select(labels, buf.capacity, rng);
                break;
            default: {
                // Candidates are projected with the latest encoder.
                ForwardTrace trace = encoder_forward(encoder, candidates);
                if (policy == MemoryPolicy::psa)
                    keep = psa_select(trace.features, buf.capacity);
                else if (policy == MemoryPolicy::minred)
                    keep = minred_select(trace.features, buf.capacity);
                else
                    keep = kmeans_select(trace.features, buf.capacity,
                                         kmeans_k == 0 ? 1 : kmeans_k, rng);
                break;
            }
        }
    }

    Matrix next(keep.size(), candidates.cols);
    std::vector<int> next_labels;
    for (std::size_t t = 0; t < keep.size(); ++t) {
        const double* src = candidates.row_ptr(keep[t]);
        std::copy(src, src + candidates.cols, next.row_ptr(t));
        if (tracking) next_labels.push_back(labels[keep[t]]);
    }
    buf.items = std::move(next);
    buf.hidden_labels = std::move(next_labels);
}

}  // namespace scale

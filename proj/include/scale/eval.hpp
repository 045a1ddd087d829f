#pragma once

#include <cstddef>
#include <vector>

#include "scale/encoder.hpp"
#include "scale/matrix.hpp"
#include "scale/rng.hpp"

namespace scale {

// Labeled evaluation set with the same number of samples per class.
struct EvalSet {
    Matrix samples;
    std::vector<int> labels;

    // Throws unless every class in [0, num_classes) appears equally often.
    void validate(int num_classes) const;
};

// Cluster-to-label bijection and the accuracy it achieves.
struct AssignmentResult {
    std::vector<int> mapping;  // mapping[cluster] = label
    double acc = 0.0;
};

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

// Cosine-similarity kNN with majority vote. Vote ties break toward the
// larger summed similarity, then the lower label id. k is clamped to the
// reference size.
std::vector<int> knn_predict(const Matrix& ref_feats, const std::vector<int>& ref_labels,
                             const Matrix& query_feats, std::size_t k);

KMeansResult kmeans_cluster_detailed(const Matrix& feats, std::size_t T, RngState& rng,
                                     std::size_t iters = 100);
std::vector<int> kmeans_cluster(const Matrix& feats, std::size_t T, RngState& rng,
                                std::size_t iters = 100);

// Similarity-graph clustering: affinity exp(cos/sigma) with zero diagonal,
// symmetric normalized Laplacian, bottom-T eigenvectors by cyclic Jacobi,
// rows renormalized, then kmeans on the embedding.
std::vector<int> spectral_cluster(const Matrix& feats, std::size_t T, RngState& rng,
                                  double sigma = 0.1, std::size_t cap = 2000);

// Best accuracy over all bijective cluster-to-label assignments, via the
// Hungarian method on the T x T contingency table.
AssignmentResult acc_hungarian(const std::vector<int>& pred, const std::vector<int>& truth,
                               std::size_t T);

struct EvalOptions {
    std::size_t knn_k = 5;
    bool use_spectral = true;  // false: kmeans directly on the features
    double spectral_sigma = 0.1;
    std::size_t spectral_cap = 2000;
};

struct EvalScores {
    double acc = 0.0;
    double knn_acc = 0.0;
};

// Frozen-model evaluation: clustering accuracy over the whole set plus kNN
// accuracy over a stratified half/half reference-query split.
EvalScores evaluate(const FrozenSnapshot& snap, const EvalSet& eval_set, std::size_t T,
                    const EvalOptions& opts, RngState& rng);

// Jacobi eigendecomposition of a symmetric matrix (exposed for testing).
// Returns eigenvalues ascending with matching eigenvector columns.
void jacobi_eigen_symmetric(const Matrix& sym, std::vector<double>& eigenvalues,
                            Matrix& eigenvectors, double tol = 1e-10);

}  // namespace scale

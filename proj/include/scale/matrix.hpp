#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace scale {

// Dense row-major matrix of doubles. The single data carrier used for raw
// sample batches, feature batches and similarity tables.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// True when every entry is finite.
bool all_finite(const Matrix& m);

// Throws std::invalid_argument mentioning `who` if any entry is non-finite.
void require_finite(const Matrix& m, const std::string& who);

// Row-wise L2 normalization. Rows with norm < eps map to the first standard
// basis vector (degenerate rule; keeps untrained all-zero encoders alive).
Matrix l2_normalize_rows(const Matrix& m, double eps = 1e-12);

// out[i][j] = dot(a.row(i), b.row(j)), accumulated left to right over the
// column index so results are bit-reproducible.
Matrix pairwise_dot(const Matrix& a, const Matrix& b);

// Row-wise softmax with max-subtraction. With exclude_diagonal set the input
// must be square and entry (i,i) is masked (exactly 0 in the output).
// A row with every entry masked throws.
Matrix masked_softmax_rows(const Matrix& logits, bool exclude_diagonal);

}  // namespace scale

#include "scale/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scale {

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_finite(const Matrix& m, const std::string& who) {
    if (!all_finite(m))
        throw std::invalid_argument(who + ": input contains non-finite entries");
}

Matrix l2_normalize_rows(const Matrix& m, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("l2_normalize_rows: eps must be positive");
    require_finite(m, "l2_normalize_rows");
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* src = m.row_ptr(i);
        double* dst = out.row_ptr(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) sq += src[j] * src[j];
        double norm = std::sqrt(sq);
        if (norm < eps) {
            // Degenerate row: map to the first basis vector.
            for (std::size_t j = 0; j < m.cols; ++j) dst[j] = 0.0;
            if (m.cols > 0) dst[0] = 1.0;
        } else if (std::abs(norm - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) {
            // Already unit to machine precision; copying keeps the
            // operation idempotent bit for bit.
            for (std::size_t j = 0; j < m.cols; ++j) dst[j] = src[j];
        } else {
            for (std::size_t j = 0; j < m.cols; ++j) dst[j] = src[j] / norm;
        }
    }
    return out;
}

Matrix pairwise_dot(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw std::invalid_argument("pairwise_dot: column counts differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ra = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* rb = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += ra[k] * rb[k];
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix masked_softmax_rows(const Matrix& logits, bool exclude_diagonal) {
    if (exclude_diagonal && logits.rows != logits.cols)
        throw std::invalid_argument("masked_softmax_rows: diagonal mask requires a square matrix");
    require_finite(logits, "masked_softmax_rows");
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* src = logits.row_ptr(i);
        double* dst = out.row_ptr(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (exclude_diagonal && j == i) continue;
            mx = std::max(mx, src[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("masked_softmax_rows: row has no unmasked entries");
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (exclude_diagonal && j == i) {
                dst[j] = 0.0;
                continue;
            }
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (exclude_diagonal && j == i) continue;
            dst[j] /= sum;
        }
    }
    return out;
}

}  // namespace scale

#include "rwmatch/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <string_view>
#include <unordered_map>

namespace rwmatch {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.assign(rows_ * cols_, 0.0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        require(row.size() == cols_, "Matrix: ragged initializer");
        std::size_t c = 0;
        for (double v : row) (*this)(r, c++) = v;
        ++r;
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_columns(const std::vector<Vector>& columns) {
    if (columns.empty()) return {};
    Matrix m(columns.front().size(), columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        require(columns[c].size() == m.rows(), "Matrix::from_columns: ragged columns");
        std::copy(columns[c].begin(), columns[c].end(), m.col(c).begin());
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        auto oc = out.col(j);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double bkj = b(k, j);
            if (bkj == 0.0) continue;
            auto ac = a.col(k);
            for (std::size_t i = 0; i < a.rows(); ++i) oc[i] += ac[i] * bkj;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) out(j, i) = a(i, j);
    return out;
}

Matrix matmul_transposed_left(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_transposed_left: row counts differ");
    // Column j of the result is sum_k b(k, j) * row k of a; with a transposed
    // those rows are contiguous and the inner loop vectorizes.
    const Matrix at = transpose(a);
    const std::size_t n = a.cols();
    Matrix out(n, b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        auto bc = b.col(j);
        double* dst = out.col(j).data();
        for (std::size_t k = 0; k < bc.size(); ++k) {
            const double w = bc[k];
            const double* src = at.col(k).data();
            for (std::size_t i = 0; i < n; ++i) dst[i] += w * src[i];
        }
    }
    return out;
}

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(m.rows(), indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        require(indices[k] < m.cols(), "gather_columns: index out of range");
        auto src = m.col(indices[k]);
        std::copy(src.begin(), src.end(), out.col(k).begin());
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        if (std::isnan(d)) return d;
        m = std::max(m, d);
    }
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
    return max_abs_diff(a.data(), b.data());
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ColumnClasses classify_columns(const Matrix& m, std::span<const double> tags) {
    require(tags.empty() || tags.size() == m.cols(), "classify_columns: tag count mismatch");
    ColumnClasses out;
    out.class_of.resize(m.cols());
    const std::size_t bytes = m.rows() * sizeof(double);
    auto column_key = [&](std::size_t c) {
        return std::string_view(reinterpret_cast<const char*>(m.col(c).data()), bytes);
    };
    auto same = [&](std::size_t x, std::size_t y) {
        if (!tags.empty() && std::memcmp(&tags[x], &tags[y], sizeof(double)) != 0) return false;
        return column_key(x) == column_key(y);
    };

    std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
    buckets.reserve(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        std::size_t h = std::hash<std::string_view>{}(column_key(c));
        if (!tags.empty()) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &tags[c], sizeof bits);
            h ^= std::hash<std::uint64_t>{}(bits) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        auto& bucket = buckets[h];
        bool found = false;
        for (std::size_t k : bucket) {
            if (same(out.representatives[k], c)) {
                out.class_of[c] = k;
                found = true;
                break;
            }
        }
        if (!found) {
            bucket.push_back(out.representatives.size());
            out.class_of[c] = out.representatives.size();
            out.representatives.push_back(c);
        }
    }
    return out;
}

namespace {

std::uint64_t mix_bits(std::uint64_t h, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = (h ^ bits) * 0x9e3779b97f4a7c15ULL;
    return h ^ (h >> 29);
}

bool same_bits(double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; }

}  // namespace

ColumnClasses classify_rows(const Matrix& m, std::span<const double> tags) {
    require(tags.empty() || tags.size() == m.rows(), "classify_rows: tag count mismatch");
    const std::size_t n = m.rows();
    std::vector<std::uint64_t> h(n, 0x243f6a8885a308d3ULL);
    if (!tags.empty())
        for (std::size_t i = 0; i < n; ++i) h[i] = mix_bits(h[i], tags[i]);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        auto c = m.col(j);
        for (std::size_t i = 0; i < n; ++i) h[i] = mix_bits(h[i], c[i]);
    }

    ColumnClasses out;
    out.class_of.resize(n);
    std::unordered_map<std::uint64_t, std::size_t> first;
    first.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [it, inserted] = first.try_emplace(h[i], out.representatives.size());
        if (inserted) out.representatives.push_back(i);
        out.class_of[i] = it->second;
    }

    std::vector<char> bad(n, 0);
    auto rep_of = [&](std::size_t i) { return out.representatives[out.class_of[i]]; };
    if (!tags.empty())
        for (std::size_t i = 0; i < n; ++i) bad[i] = !same_bits(tags[i], tags[rep_of(i)]);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        auto c = m.col(j);
        for (std::size_t i = 0; i < n; ++i) bad[i] |= !same_bits(c[i], c[rep_of(i)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!bad[i]) continue;
        out.class_of[i] = out.representatives.size();
        out.representatives.push_back(i);
    }
    return out;
}

double log_sum_exp(std::span<const double> values) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values) hi = std::max(hi, v);
    if (hi == -std::numeric_limits<double>::infinity()) return hi;
    double s = 0.0;
    for (double v : values) s += std::exp(v - hi);
    return hi + std::log(s);
}

}  // namespace rwmatch

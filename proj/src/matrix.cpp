#include "lreid/matrix.hpp"

#include <cmath>
#include <sstream>

#include "lreid/errors.hpp"

namespace lreid {

Matrix::Matrix(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimensions");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n, 0.0);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vec>& rows_in) {
    if (rows_in.empty()) return Matrix();
    const int c = static_cast<int>(rows_in.front().size());
    Matrix m(static_cast<int>(rows_in.size()), c);
    for (int i = 0; i < m.rows; ++i) {
        if (static_cast<int>(rows_in[static_cast<std::size_t>(i)].size()) != c)
            throw ShapeError("Matrix::from_rows: ragged input");
        for (int j = 0; j < c; ++j) m.at(i, j) = rows_in[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

Vec Matrix::row(int i) const {
    return Vec(row_ptr(i), row_ptr(i) + cols);
}

void Matrix::fill(double v) {
    std::fill(data.begin(), data.end(), v);
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    std::ostringstream os;
    os << "[" << rows << "x" << cols << "]";
    return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ, lhs " + a.shape_str() + " vs rhs " + b.shape_str());
    Matrix out(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

void add_inplace(Matrix& a, const Matrix& b, double scale) {
    if (!a.same_shape(b))
        throw ShapeError("add_inplace: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

void scale_inplace(Matrix& a, double s) {
    for (double& v : a.data) v *= s;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Vec& a) {
    return std::sqrt(dot(a, a));
}

void axpy(Vec& y, const Vec& x, double a) {
    if (y.size() != x.size()) throw ShapeError("axpy: length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

Vec scaled(const Vec& x, double a) {
    Vec out = x;
    for (double& v : out) v *= a;
    return out;
}

} // namespace lreid

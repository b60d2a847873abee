#pragma once

#include <string>
#include <vector>

namespace lreid {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Small and unclever on purpose: every
// model in this project fits in a few tens of kilobytes.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0);

    static Matrix zeros(int r, int c) { return Matrix(r, c, 0.0); }
    static Matrix identity(int n);
    static Matrix from_rows(const std::vector<Vec>& rows);

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    double* row_ptr(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row_ptr(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
    Vec row(int i) const;

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v);
    bool all_finite() const;
    std::string shape_str() const; // "[RxC]"
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b, double scale = 1.0);
void scale_inplace(Matrix& a, double s);

double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& a);
void axpy(Vec& y, const Vec& x, double a); // y += a*x
Vec scaled(const Vec& x, double a);

} // namespace lreid

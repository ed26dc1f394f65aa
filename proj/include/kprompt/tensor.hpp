#pragma once

#include <cstddef>
#include <vector>

namespace kprompt {

// Dense row-major matrix. All model math runs in double; checkpoints quantize
// through float32 (see ModelParams::quantize_f32).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    std::size_t size() const { return a.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& A, const Matrix& B);     // A(r,k) * B(k,c)
Matrix matmul_nt(const Matrix& A, const Matrix& B);  // A(r,k) * B(c,k)^T
Matrix matmul_tn(const Matrix& A, const Matrix& B);  // A(k,r)^T * B(k,c)
void add_bias(Matrix& A, const Matrix& bias);        // bias is 1 x cols
Matrix col_sums(const Matrix& A);                    // 1 x cols
bool all_finite(const Matrix& A);

}  // namespace kprompt

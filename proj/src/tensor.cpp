#include "kprompt/tensor.hpp"

#include <cmath>

#include "kprompt/errors.hpp"

namespace kprompt {

Matrix matmul(const Matrix& A, const Matrix& B) {
    if (A.cols != B.rows) throw NumericalError("matmul: shape mismatch");
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* ar = A.row(i);
        double* cr = C.row(i);
        for (int k = 0; k < A.cols; ++k) {
            double aik = ar[k];
            if (aik == 0.0) continue;
            const double* br = B.row(k);
            for (int j = 0; j < B.cols; ++j) cr[j] += aik * br[j];
        }
    }
    return C;
}

Matrix matmul_nt(const Matrix& A, const Matrix& B) {
    if (A.cols != B.cols) throw NumericalError("matmul_nt: shape mismatch");
    Matrix C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const double* ar = A.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* br = B.row(j);
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += ar[k] * br[k];
            C.at(i, j) = s;
        }
    }
    return C;
}

Matrix matmul_tn(const Matrix& A, const Matrix& B) {
    if (A.rows != B.rows) throw NumericalError("matmul_tn: shape mismatch");
    Matrix C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k) {
        const double* ar = A.row(k);
        const double* br = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            double aki = ar[i];
            if (aki == 0.0) continue;
            double* cr = C.row(i);
            for (int j = 0; j < B.cols; ++j) cr[j] += aki * br[j];
        }
    }
    return C;
}

void add_bias(Matrix& A, const Matrix& bias) {
    if (bias.rows != 1 || bias.cols != A.cols) throw NumericalError("add_bias: shape mismatch");
    for (int i = 0; i < A.rows; ++i) {
        double* r = A.row(i);
        for (int j = 0; j < A.cols; ++j) r[j] += bias.at(0, j);
    }
}

Matrix col_sums(const Matrix& A) {
    Matrix out(1, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* r = A.row(i);
        for (int j = 0; j < A.cols; ++j) out.at(0, j) += r[j];
    }
    return out;
}

bool all_finite(const Matrix& A) {
    for (double x : A.a)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace kprompt

#include "lodge/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lodge/kernels.hpp"

namespace lodge {

Mat Mat::slice_rows(std::size_t begin, std::size_t count) const {
    if (begin + count > rows) throw ShapeError("slice_rows out of range");
    Mat out(count, cols);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols, out.data.begin());
    return out;
}

void Mat::set_rows(std::size_t begin, const Mat& src) {
    if (src.cols != cols || begin + src.rows > rows) throw ShapeError("set_rows shape mismatch");
    std::copy(src.data.begin(), src.data.end(), data.begin() + static_cast<std::ptrdiff_t>(begin * cols));
}

void require_shape(const Mat& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows != rows || m.cols != cols) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
    }
}

Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

namespace {

void gemm(const Mat& a, const Mat& b, Mat& c, bool acc) {
    if (a.cols != b.rows) throw ShapeError("matmul inner dimension mismatch");
    if (!acc) {
        c.rows = a.rows;
        c.cols = b.cols;
        c.data.assign(a.rows * b.cols, 0.0);
    } else if (c.rows != a.rows || c.cols != b.cols) {
        throw ShapeError("matmul accumulator shape mismatch");
    }
    if (a.rows == 0 || b.cols == 0) return;
    if (a.cols == 0) return;
    kernels::active().gemm(a.rows, b.cols, a.cols, a.ptr(), a.cols, b.ptr(), b.cols, c.ptr(), c.cols, acc);
}

}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
    Mat c;
    gemm(a, b, c, false);
    return c;
}
Mat matmul_nt(const Mat& a, const Mat& b) { return matmul(a, transpose(b)); }
Mat matmul_tn(const Mat& a, const Mat& b) { return matmul(transpose(a), b); }
void matmul_acc(const Mat& a, const Mat& b, Mat& c) { gemm(a, b, c, true); }
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) { gemm(a, transpose(b), c, true); }
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) { gemm(transpose(a), b, c, true); }

void add_inplace(Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add_inplace shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

void scale_inplace(Mat& a, double s) {
    for (double& v : a.data) v *= s;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double sum_squares(const Mat& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return s;
}

bool all_finite(const Mat& a) {
    return std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lodge

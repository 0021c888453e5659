#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lodge {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Row-major dense matrix of doubles.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    // Copy of rows [begin, begin + count).
    Mat slice_rows(std::size_t begin, std::size_t count) const;
    void set_rows(std::size_t begin, const Mat& src);
    friend bool operator==(const Mat&, const Mat&) = default;
};

void require_shape(const Mat& m, std::size_t rows, std::size_t cols, const char* what);

Mat transpose(const Mat& a);

// a * b
Mat matmul(const Mat& a, const Mat& b);
// a * b^T
Mat matmul_nt(const Mat& a, const Mat& b);
// a^T * b
Mat matmul_tn(const Mat& a, const Mat& b);
// c += a * b  (and the transposed variants)
void matmul_acc(const Mat& a, const Mat& b, Mat& c);
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c);
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c);

void add_inplace(Mat& a, const Mat& b);
void scale_inplace(Mat& a, double s);
double max_abs_diff(const Mat& a, const Mat& b);
double sum_squares(const Mat& a);
bool all_finite(const Mat& a);

}  // namespace lodge

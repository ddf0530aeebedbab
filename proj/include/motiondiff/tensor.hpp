#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "motiondiff/error.hpp"
#include "motiondiff/rng.hpp"

namespace motiondiff {

// Dense row-major tensor of doubles. Rank is arbitrary but the model code
// only ever builds rank 0..2; checkpoints preserve whatever rank they are
// given. Every public kernel verifies its output is finite: overflow is an
// error here, never a silent NaN.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor from_vector(std::vector<double> values);  // rank-1
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(int64_t n);
    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi);

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; contract-checked.
    int64_t rows() const;
    int64_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

    double item() const;  // requires size() == 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    void fill(double v);
    void add_scaled(const Tensor& other, double scale);  // this += scale * other

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

// Throws ErrorKind::Numeric naming `op` if any element is non-finite.
void check_finite(const Tensor& t, const char* op);

// ---- Core kernels (pure, eager) ------------------------------------------

// C = alpha * op(A) * op(B) + beta * C, shapes checked. C is resized when
// beta == 0. Backed by Eigen's GEMM.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, double alpha, Tensor& c,
          double beta);

Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction; rows sum to 1 for any finite input.
Tensor softmax_rows(const Tensor& x);

inline constexpr double kLayerNormEpsilon = 1e-5;

// Normalizes each row of x to zero mean / unit variance (epsilon-stabilized),
// then applies gain and bias. Requires cols >= 2.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
double sum(const Tensor& a);
double mean(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

// Mean squared error over all elements.
double mse(const Tensor& a, const Tensor& b);

// Pearson correlation of two equally sized tensors viewed as flat series.
// Defined as 0 when either side has zero variance.
double pearson(const Tensor& a, const Tensor& b);

}  // namespace motiondiff

#include "motiondiff/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace motiondiff {

namespace {

int64_t shape_product(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        require(e > 0, ErrorKind::Dimension, "tensor extents must be positive, got " + shape_to_string(shape));
        n *= e;
    }
    return n;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::scalar(double v) {
    Tensor t(std::vector<int64_t>{});
    t.data_ = {v};
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
    Tensor t;
    t.shape_ = {static_cast<int64_t>(values.size())};
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int64_t r = static_cast<int64_t>(rows.size());
    const int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    Tensor t({r, c});
    int64_t i = 0;
    for (const auto& row : rows) {
        require(static_cast<int64_t>(row.size()) == c, ErrorKind::Dimension, "ragged row list");
        for (double v : row) t.data_[static_cast<size_t>(i++)] = v;
    }
    return t;
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = stddev * rng.normal();
    return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = rng.uniform(lo, hi);
    return t;
}

int64_t Tensor::rows() const {
    require(rank() == 2, ErrorKind::Dimension, "expected rank-2 tensor, got " + shape_str());
    return shape_[0];
}

int64_t Tensor::cols() const {
    require(rank() == 2, ErrorKind::Dimension, "expected rank-2 tensor, got " + shape_str());
    return shape_[1];
}

double Tensor::item() const {
    require(size() == 1, ErrorKind::Contract, "item() requires a single-element tensor, got " + shape_str());
    return data_[0];
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void Tensor::add_scaled(const Tensor& other, double s) {
    require(same_shape(other), ErrorKind::Dimension,
            "add_scaled shape mismatch: " + shape_str() + " vs " + other.shape_str());
    const double* src = other.data();
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += s * src[i];
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.raw()) {
        if (!std::isfinite(v)) {
            raise(ErrorKind::Numeric, std::string(op) + " produced a non-finite value");
        }
    }
}

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, double alpha, Tensor& c,
          double beta) {
    require(a.rank() == 2 && b.rank() == 2, ErrorKind::Dimension,
            "matmul requires rank-2 operands: " + a.shape_str() + " and " + b.shape_str());
    const int64_t m = trans_a ? a.cols() : a.rows();
    const int64_t k = trans_a ? a.rows() : a.cols();
    const int64_t kb = trans_b ? b.cols() : b.rows();
    const int64_t n = trans_b ? b.rows() : b.cols();
    require(k == kb, ErrorKind::Dimension,
            "matmul inner extents differ: " + a.shape_str() + (trans_a ? "^T" : "") + " x " +
                b.shape_str() + (trans_b ? "^T" : ""));
    if (beta == 0.0) {
        c = Tensor({m, n});
    } else {
        require(c.rank() == 2 && c.rows() == m && c.cols() == n, ErrorKind::Dimension,
                "gemm accumulator shape mismatch: " + c.shape_str());
    }
    CMap am(a.data(), a.rows(), a.cols());
    CMap bm(b.data(), b.rows(), b.cols());
    Map cm(c.data(), m, n);
    if (!trans_a && !trans_b)
        cm.noalias() = alpha * (am * bm) + beta * cm;
    else if (trans_a && !trans_b)
        cm.noalias() = alpha * (am.transpose() * bm) + beta * cm;
    else if (!trans_a && trans_b)
        cm.noalias() = alpha * (am * bm.transpose()) + beta * cm;
    else
        cm.noalias() = alpha * (am.transpose() * bm.transpose()) + beta * cm;
    check_finite(c, "matmul");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c;
    gemm(a, false, b, false, 1.0, c, 0.0);
    return c;
}

Tensor softmax_rows(const Tensor& x) {
    require(x.rank() == 2, ErrorKind::Dimension, "softmax_rows expects rank-2 input, got " + x.shape_str());
    check_finite(x, "softmax_rows input");
    Tensor y(x.shape());
    const int64_t r = x.rows(), c = x.cols();
    for (int64_t i = 0; i < r; ++i) {
        const double* xi = x.data() + i * c;
        double* yi = y.data() + i * c;
        double m = xi[0];
        for (int64_t j = 1; j < c; ++j) m = std::max(m, xi[j]);
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - m);
            z += yi[j];
        }
        for (int64_t j = 0; j < c; ++j) yi[j] /= z;
    }
    check_finite(y, "softmax_rows");
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require(x.rank() == 2, ErrorKind::Dimension, "layer_norm expects rank-2 input, got " + x.shape_str());
    const int64_t d = x.cols();
    require(d >= 2, ErrorKind::Dimension, "layer_norm needs feature dim >= 2, got " + x.shape_str());
    require(gain.size() == d && bias.size() == d, ErrorKind::Dimension,
            "layer_norm gain/bias must have " + std::to_string(d) + " entries");
    Tensor y(x.shape());
    const int64_t r = x.rows();
    for (int64_t i = 0; i < r; ++i) {
        const double* xi = x.data() + i * d;
        double* yi = y.data() + i * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += xi[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double dv = xi[j] - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        for (int64_t j = 0; j < d; ++j) yi[j] = (xi[j] - mu) * inv * gain[j] + bias[j];
    }
    check_finite(y, "layer_norm");
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::Dimension, "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor c(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    check_finite(c, "add");
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::Dimension, "sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor c(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    check_finite(c, "sub");
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::Dimension, "mul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor c(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
    check_finite(c, "mul");
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
    check_finite(c, "scale");
    return c;
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, ErrorKind::Dimension, "transpose expects rank-2, got " + a.shape_str());
    Tensor c({a.cols(), a.rows()});
    for (int64_t i = 0; i < a.rows(); ++i)
        for (int64_t j = 0; j < a.cols(); ++j) c.at(j, i) = a.at(i, j);
    return c;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

double mean(const Tensor& a) {
    require(a.size() > 0, ErrorKind::Contract, "mean of empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

double dot(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorKind::Dimension,
            "dot size mismatch: " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double mse(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::Dimension, "mse shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double pearson(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorKind::Dimension,
            "pearson size mismatch: " + a.shape_str() + " vs " + b.shape_str());
    const int64_t n = a.size();
    require(n >= 2, ErrorKind::Contract, "pearson needs at least 2 samples");
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;  // degenerate series: defined as 0
    return sab / std::sqrt(saa * sbb);
}

}  // namespace motiondiff

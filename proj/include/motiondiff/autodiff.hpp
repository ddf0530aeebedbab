#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

// Reverse-mode graph over dense tensors. Each Var is a handle to a node that
// owns its value; operations build new nodes referencing their inputs, and
// backward() walks the graph in reverse topological order. There is no
// global tape, so forward evaluation with frozen parameters is safe from
// multiple threads; training mutates parameter gradients and is single
// threaded by contract.

namespace detail {
struct Node;
}

class Var;

// Called during backward with the node's output gradient, its forward value,
// and its parents; must accumulate into the parents' gradients.
using BackwardFn =
    std::function<void(const Tensor& out_grad, const Tensor& out_value, std::span<Var> parents)>;

class Var {
public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad);
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Records the op iff gradients are enabled and some parent requires them;
    // otherwise the result is a plain constant.
    static Var make(Tensor value, std::vector<Var> parents, BackwardFn fn);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const;
    Tensor& grad();
    const Tensor& grad() const;
    bool requires_grad() const;
    void zero_grad();

    // Mutable access to the stored value. Used by the optimizer and the
    // checkpoint loader; never call while a graph referencing this leaf is
    // alive.
    Tensor& mutable_value();

private:
    std::shared_ptr<detail::Node> node_;
    friend void backward(const Var& loss);
    friend void accumulate_grad(Var& v, const Tensor& delta);
    friend Tensor& grad_buffer(Var& v);
};

// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Accumulates d(loss)/d(node) into every reachable gradient-requiring leaf.
// `loss` must be scalar (single element).
void backward(const Var& loss);

// Helpers for implementing fused ops outside this translation unit.
void accumulate_grad(Var& v, const Tensor& delta);
Tensor& grad_buffer(Var& v);  // lazily allocated, zero-initialized

// ---- Differentiable operations -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var add_rowvec(const Var& x, const Var& v);            // broadcast v over rows of x
Var gelu(const Var& x);
Var tanh_op(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
Var slice_rows(const Var& x, int64_t begin, int64_t end);
Var concat_rows(const std::vector<Var>& parts);
Var tile_rows(const Var& v, int64_t n);                // v: [c] or [1 x c] -> [n x c]
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse_loss(const Var& x, const Tensor& target);
Var l2_normalize_rows(const Var& x);
Var mean_pool_rows(const Var& x, int64_t groups);      // [g*t x c] -> [g x c]
Var scale_by(const Var& x, const Var& s);              // s: scalar Var
Var exp_scalar(const Var& s);

// Named parameter: a gradient-requiring leaf. The gradient buffer always has
// the value's shape; zero_grad() resets it to exact zeros.
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    const std::string& name() const { return name_; }
    Var& var() { return var_; }
    const Var& var() const { return var_; }
    const Tensor& value() const { return var_.value(); }
    Tensor& mutable_value() { return var_.mutable_value(); }
    Tensor& grad() { return var_.grad(); }
    const Tensor& grad() const { return var_.grad(); }
    void zero_grad() { var_.zero_grad(); }

private:
    std::string name_;
    Var var_;
};

using ParameterList = std::vector<Parameter*>;

void zero_grad(const ParameterList& params);
int64_t parameter_count(const ParameterList& params);

// Adaptive-moment optimizer; deterministic given identical state.
struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update from the accumulated gradients. Throws
    // ErrorKind::Training naming the parameter if a gradient is non-finite.
    void step(const ParameterList& params);

    const AdamConfig& config() const { return cfg_; }
    int64_t iterations() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

}  // namespace motiondiff

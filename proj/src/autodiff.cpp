#include "motiondiff/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace motiondiff {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<Var> parents;
    BackwardFn backward_fn;
};

}  // namespace detail

namespace {

thread_local int g_no_grad_depth = 0;

using detail::Node;

// A default-constructed Tensor and a rank-0 scalar share shape {} but differ
// in size, so allocation checks must compare both.
bool grad_allocated(const Node& n) {
    return n.grad.same_shape(n.value) && n.grad.size() == n.value.size();
}

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var Var::leaf(Tensor value, bool requires_grad) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->requires_grad = requires_grad;
    v.node_->is_leaf = true;
    if (requires_grad) v.node_->grad = Tensor(value.shape());
    v.node_->value = std::move(value);
    return v;
}

Var Var::make(Tensor value, std::vector<Var> parents, BackwardFn fn) {
    Var v;
    v.node_ = std::make_shared<Node>();
    bool needs = grad_enabled();
    if (needs) {
        needs = false;
        for (const Var& p : parents) {
            if (p.requires_grad()) {
                needs = true;
                break;
            }
        }
    }
    if (needs) {
        v.node_->requires_grad = true;
        v.node_->parents = std::move(parents);
        v.node_->backward_fn = std::move(fn);
    }
    v.node_->value = std::move(value);
    return v;
}

const Tensor& Var::value() const {
    require(defined(), ErrorKind::Contract, "use of undefined Var");
    return node_->value;
}

Tensor& Var::mutable_value() {
    require(defined(), ErrorKind::Contract, "use of undefined Var");
    return node_->value;
}

Tensor& Var::grad() {
    require(defined(), ErrorKind::Contract, "use of undefined Var");
    if (!grad_allocated(*node_)) node_->grad = Tensor(node_->value.shape());
    return node_->grad;
}

const Tensor& Var::grad() const {
    require(defined(), ErrorKind::Contract, "use of undefined Var");
    return node_->grad;
}

bool Var::requires_grad() const { return defined() && node_->requires_grad; }

void Var::zero_grad() {
    if (defined()) grad().fill(0.0);
}

Tensor& grad_buffer(Var& v) {
    Node& n = *v.node_;
    if (!grad_allocated(n)) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void accumulate_grad(Var& v, const Tensor& delta) { grad_buffer(v).add_scaled(delta, 1.0); }

void backward(const Var& loss) {
    require(loss.defined(), ErrorKind::Contract, "backward on undefined Var");
    require(loss.value().size() == 1, ErrorKind::Contract,
            "backward requires a scalar loss, got shape " + loss.value().shape_str());
    if (!loss.requires_grad()) return;

    // Post-order DFS; reversed, every node precedes its inputs, so a node's
    // backward runs only after all of its consumers have contributed.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node_.get(), 0});
    seen.insert(loss.node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].node_.get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    {
        Tensor& g = grad_buffer(const_cast<Var&>(loss));
        g[0] += 1.0;
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward_fn) continue;
        if (!grad_allocated(*n)) n->grad = Tensor(n->value.shape());
        n->backward_fn(n->grad, n->value, std::span<Var>(n->parents));
        if (!n->is_leaf) n->grad = Tensor();  // consumed; free early
    }
}

// ---- ops ------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    Tensor out = add(a.value(), b.value());
    return Var::make(std::move(out), {a, b},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) accumulate_grad(ps[0], g);
                         if (ps[1].requires_grad()) accumulate_grad(ps[1], g);
                     });
}

Var sub(const Var& a, const Var& b) {
    Tensor out = sub(a.value(), b.value());
    return Var::make(std::move(out), {a, b},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) accumulate_grad(ps[0], g);
                         if (ps[1].requires_grad()) grad_buffer(ps[1]).add_scaled(g, -1.0);
                     });
}

Var mul(const Var& a, const Var& b) {
    Tensor out = mul(a.value(), b.value());
    return Var::make(std::move(out), {a, b},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) grad_buffer(ps[0]).add_scaled(mul(g, ps[1].value()), 1.0);
                         if (ps[1].requires_grad()) grad_buffer(ps[1]).add_scaled(mul(g, ps[0].value()), 1.0);
                     });
}

Var scale(const Var& a, double s) {
    Tensor out = scale(a.value(), s);
    return Var::make(std::move(out), {a},
                     [s](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) grad_buffer(ps[0]).add_scaled(g, s);
                     });
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
    Tensor out;
    gemm(a.value(), trans_a, b.value(), trans_b, 1.0, out, 0.0);
    return Var::make(std::move(out), {a, b},
                     [trans_a, trans_b](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         const Tensor& av = ps[0].value();
                         const Tensor& bv = ps[1].value();
                         if (ps[0].requires_grad()) {
                             Tensor& da = grad_buffer(ps[0]);
                             if (!trans_a && !trans_b)
                                 gemm(g, false, bv, true, 1.0, da, 1.0);
                             else if (trans_a && !trans_b)
                                 gemm(bv, false, g, true, 1.0, da, 1.0);
                             else if (!trans_a && trans_b)
                                 gemm(g, false, bv, false, 1.0, da, 1.0);
                             else
                                 gemm(bv, true, g, true, 1.0, da, 1.0);
                         }
                         if (ps[1].requires_grad()) {
                             Tensor& db = grad_buffer(ps[1]);
                             if (!trans_a && !trans_b)
                                 gemm(av, true, g, false, 1.0, db, 1.0);
                             else if (trans_a && !trans_b)
                                 gemm(av, false, g, false, 1.0, db, 1.0);
                             else if (!trans_a && trans_b)
                                 gemm(g, true, av, false, 1.0, db, 1.0);
                             else
                                 gemm(g, true, av, true, 1.0, db, 1.0);
                         }
                     });
}

Var add_rowvec(const Var& x, const Var& v) {
    const Tensor& xv = x.value();
    const Tensor& vv = v.value();
    require(xv.rank() == 2, ErrorKind::Dimension, "add_rowvec expects rank-2 lhs, got " + xv.shape_str());
    require(vv.size() == xv.cols(), ErrorKind::Dimension,
            "add_rowvec width mismatch: " + xv.shape_str() + " vs " + vv.shape_str());
    Tensor out(xv.shape());
    const int64_t r = xv.rows(), c = xv.cols();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + vv[j];
    check_finite(out, "add_rowvec");
    return Var::make(std::move(out), {x, v},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) accumulate_grad(ps[0], g);
                         if (ps[1].requires_grad()) {
                             Tensor& dv = grad_buffer(ps[1]);
                             const int64_t r = g.rows(), c = g.cols();
                             for (int64_t i = 0; i < r; ++i)
                                 for (int64_t j = 0; j < c; ++j) dv[j] += g[i * c + j];
                         }
                     });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Var gelu(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    check_finite(out, "gelu");
    return Var::make(std::move(out), {x},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         const Tensor& xv = ps[0].value();
                         Tensor& dx = grad_buffer(ps[0]);
                         for (int64_t i = 0; i < xv.size(); ++i) {
                             const double v = xv[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                             const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                             dx[i] += g[i] * (cdf + v * pdf);
                         }
                     });
}

Var tanh_op(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
    return Var::make(std::move(out), {x},
                     [](const Tensor& g, const Tensor& y, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dx = grad_buffer(ps[0]);
                         for (int64_t i = 0; i < y.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
                     });
}

Var softmax_rows(const Var& x) {
    Tensor out = softmax_rows(x.value());
    return Var::make(std::move(out), {x},
                     [](const Tensor& g, const Tensor& y, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dx = grad_buffer(ps[0]);
                         const int64_t r = y.rows(), c = y.cols();
                         for (int64_t i = 0; i < r; ++i) {
                             const double* yi = y.data() + i * c;
                             const double* gi = g.data() + i * c;
                             double dotgy = 0.0;
                             for (int64_t j = 0; j < c; ++j) dotgy += gi[j] * yi[j];
                             double* di = dx.data() + i * c;
                             for (int64_t j = 0; j < c; ++j) di[j] += yi[j] * (gi[j] - dotgy);
                         }
                     });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
    Tensor out = layer_norm(x.value(), gain.value(), bias.value());
    return Var::make(
        std::move(out), {x, gain, bias},
        [](const Tensor& g, const Tensor&, std::span<Var> ps) {
            const Tensor& xv = ps[0].value();
            const Tensor& gainv = ps[1].value();
            const int64_t r = xv.rows(), d = xv.cols();
            const double dn = static_cast<double>(d);
            Tensor* dx = ps[0].requires_grad() ? &grad_buffer(ps[0]) : nullptr;
            Tensor* dgain = ps[1].requires_grad() ? &grad_buffer(ps[1]) : nullptr;
            Tensor* dbias = ps[2].requires_grad() ? &grad_buffer(ps[2]) : nullptr;
            for (int64_t i = 0; i < r; ++i) {
                const double* xi = xv.data() + i * d;
                const double* gi = g.data() + i * d;
                double mu = 0.0;
                for (int64_t j = 0; j < d; ++j) mu += xi[j];
                mu /= dn;
                double var = 0.0;
                for (int64_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
                var /= dn;
                const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
                // xhat_j = (x_j - mu) * inv
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double xhat = (xi[j] - mu) * inv;
                    const double dxhat = gi[j] * gainv[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                    if (dgain) (*dgain)[j] += gi[j] * xhat;
                    if (dbias) (*dbias)[j] += gi[j];
                }
                mean_dxhat /= dn;
                mean_dxhat_xhat /= dn;
                if (dx) {
                    double* di = dx->data() + i * d;
                    for (int64_t j = 0; j < d; ++j) {
                        const double xhat = (xi[j] - mu) * inv;
                        const double dxhat = gi[j] * gainv[j];
                        di[j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
            }
        });
}

Var slice_rows(const Var& x, int64_t begin, int64_t end) {
    const Tensor& xv = x.value();
    require(xv.rank() == 2, ErrorKind::Dimension, "slice_rows expects rank-2, got " + xv.shape_str());
    require(0 <= begin && begin < end && end <= xv.rows(), ErrorKind::Contract,
            "slice_rows range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") out of bounds for " + xv.shape_str());
    const int64_t c = xv.cols();
    Tensor out({end - begin, c});
    std::copy(xv.data() + begin * c, xv.data() + end * c, out.data());
    return Var::make(std::move(out), {x},
                     [begin](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dx = grad_buffer(ps[0]);
                         const int64_t c = g.cols();
                         double* dst = dx.data() + begin * c;
                         for (int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                     });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), ErrorKind::Contract, "concat_rows of zero parts");
    const int64_t c = parts.front().value().cols();
    int64_t total = 0;
    for (const Var& p : parts) {
        require(p.value().cols() == c, ErrorKind::Dimension,
                "concat_rows width mismatch: " + p.value().shape_str());
        total += p.value().rows();
    }
    Tensor out({total, c});
    int64_t row = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data(), v.data() + v.size(), out.data() + row * c);
        row += v.rows();
    }
    return Var::make(std::move(out), parts,
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         const int64_t c = g.cols();
                         int64_t row = 0;
                         for (Var& p : ps) {
                             const int64_t r = p.value().rows();
                             if (p.requires_grad()) {
                                 Tensor& dp = grad_buffer(p);
                                 const double* src = g.data() + row * c;
                                 for (int64_t i = 0; i < r * c; ++i) dp[i] += src[i];
                             }
                             row += r;
                         }
                     });
}

Var tile_rows(const Var& v, int64_t n) {
    const Tensor& vv = v.value();
    const int64_t c = vv.size();
    require(vv.rank() == 1 || (vv.rank() == 2 && vv.rows() == 1), ErrorKind::Dimension,
            "tile_rows expects a row vector, got " + vv.shape_str());
    require(n >= 1, ErrorKind::Contract, "tile_rows needs n >= 1");
    Tensor out({n, c});
    for (int64_t i = 0; i < n; ++i) std::copy(vv.data(), vv.data() + c, out.data() + i * c);
    return Var::make(std::move(out), {v},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dv = grad_buffer(ps[0]);
                         const int64_t n = g.rows(), c = g.cols();
                         for (int64_t i = 0; i < n; ++i)
                             for (int64_t j = 0; j < c; ++j) dv[j] += g[i * c + j];
                     });
}

Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(sum(x.value()));
    return Var::make(std::move(out), {x},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) {
                             Tensor& dx = grad_buffer(ps[0]);
                             for (int64_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
                         }
                     });
}

Var mean_all(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    Tensor out = Tensor::scalar(sum(x.value()) / n);
    return Var::make(std::move(out), {x},
                     [n](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (ps[0].requires_grad()) {
                             Tensor& dx = grad_buffer(ps[0]);
                             const double s = g[0] / n;
                             for (int64_t i = 0; i < dx.size(); ++i) dx[i] += s;
                         }
                     });
}

Var mse_loss(const Var& x, const Tensor& target) {
    Tensor out = Tensor::scalar(mse(x.value(), target));
    Tensor tgt = target;
    return Var::make(std::move(out), {x},
                     [tgt = std::move(tgt)](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         const Tensor& xv = ps[0].value();
                         Tensor& dx = grad_buffer(ps[0]);
                         const double s = 2.0 * g[0] / static_cast<double>(xv.size());
                         for (int64_t i = 0; i < xv.size(); ++i) dx[i] += s * (xv[i] - tgt[i]);
                     });
}

Var l2_normalize_rows(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 2, ErrorKind::Dimension, "l2_normalize_rows expects rank-2, got " + xv.shape_str());
    const int64_t r = xv.rows(), c = xv.cols();
    Tensor out(xv.shape());
    std::vector<double> norms(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const double* xi = xv.data() + i * c;
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += xi[j] * xi[j];
        const double nrm = std::sqrt(s) + 1e-12;
        norms[static_cast<size_t>(i)] = nrm;
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = xi[j] / nrm;
    }
    return Var::make(std::move(out), {x},
                     [norms = std::move(norms)](const Tensor& g, const Tensor& y, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dx = grad_buffer(ps[0]);
                         const int64_t r = y.rows(), c = y.cols();
                         for (int64_t i = 0; i < r; ++i) {
                             const double* yi = y.data() + i * c;
                             const double* gi = g.data() + i * c;
                             double gy = 0.0;
                             for (int64_t j = 0; j < c; ++j) gy += gi[j] * yi[j];
                             const double inv = 1.0 / norms[static_cast<size_t>(i)];
                             double* di = dx.data() + i * c;
                             for (int64_t j = 0; j < c; ++j) di[j] += inv * (gi[j] - yi[j] * gy);
                         }
                     });
}

Var mean_pool_rows(const Var& x, int64_t groups) {
    const Tensor& xv = x.value();
    require(xv.rank() == 2, ErrorKind::Dimension, "mean_pool_rows expects rank-2, got " + xv.shape_str());
    require(groups >= 1 && xv.rows() % groups == 0, ErrorKind::Dimension,
            "mean_pool_rows: " + std::to_string(groups) + " groups do not divide " + xv.shape_str());
    const int64_t t = xv.rows() / groups, c = xv.cols();
    Tensor out({groups, c});
    for (int64_t b = 0; b < groups; ++b) {
        double* ob = out.data() + b * c;
        for (int64_t i = 0; i < t; ++i) {
            const double* xi = xv.data() + (b * t + i) * c;
            for (int64_t j = 0; j < c; ++j) ob[j] += xi[j];
        }
        for (int64_t j = 0; j < c; ++j) ob[j] /= static_cast<double>(t);
    }
    return Var::make(std::move(out), {x},
                     [t](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         if (!ps[0].requires_grad()) return;
                         Tensor& dx = grad_buffer(ps[0]);
                         const int64_t groups = g.rows(), c = g.cols();
                         const double inv = 1.0 / static_cast<double>(t);
                         for (int64_t b = 0; b < groups; ++b)
                             for (int64_t i = 0; i < t; ++i)
                                 for (int64_t j = 0; j < c; ++j)
                                     dx[(b * t + i) * c + j] += g[b * c + j] * inv;
                     });
}

Var scale_by(const Var& x, const Var& s) {
    require(s.value().size() == 1, ErrorKind::Contract, "scale_by expects a scalar multiplier");
    Tensor out = scale(x.value(), s.value()[0]);
    return Var::make(std::move(out), {x, s},
                     [](const Tensor& g, const Tensor&, std::span<Var> ps) {
                         const double sv = ps[1].value()[0];
                         if (ps[0].requires_grad()) grad_buffer(ps[0]).add_scaled(g, sv);
                         if (ps[1].requires_grad()) {
                             double acc = 0.0;
                             const Tensor& xv = ps[0].value();
                             for (int64_t i = 0; i < xv.size(); ++i) acc += g[i] * xv[i];
                             grad_buffer(ps[1])[0] += acc;
                         }
                     });
}

Var exp_scalar(const Var& s) {
    require(s.value().size() == 1, ErrorKind::Contract, "exp_scalar expects a scalar");
    Tensor out = Tensor::scalar(std::exp(s.value()[0]));
    check_finite(out, "exp_scalar");
    return Var::make(std::move(out), {s},
                     [](const Tensor& g, const Tensor& y, std::span<Var> ps) {
                         if (ps[0].requires_grad()) grad_buffer(ps[0])[0] += g[0] * y[0];
                     });
}

// ---- parameters & optimizer ------------------------------------------------

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), var_(Var::leaf(std::move(value), true)) {}

void zero_grad(const ParameterList& params) {
    for (Parameter* p : params) p->zero_grad();
}

int64_t parameter_count(const ParameterList& params) {
    int64_t n = 0;
    for (Parameter* p : params) n += p->value().size();
    return n;
}

void Adam::step(const ParameterList& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i] = Tensor(params[i]->value().shape());
            v_[i] = Tensor(params[i]->value().shape());
        }
    }
    require(m_.size() == params.size(), ErrorKind::Contract,
            "optimizer was initialized for a different parameter set");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        const Tensor& g = p.grad();
        for (int64_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j]))
                raise(ErrorKind::Training, "non-finite gradient in parameter '" + p.name() + "'");
        }
        Tensor& val = p.mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < g.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        check_finite(val, "adam_step");
    }
}

}  // namespace motiondiff

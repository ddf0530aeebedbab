#include "motiondiff/nn.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace motiondiff {

namespace {

Tensor copy_block(const Tensor& src, int64_t row0, int64_t col0, int64_t rows, int64_t cols) {
    Tensor out({rows, cols});
    const int64_t stride = src.cols();
    for (int64_t i = 0; i < rows; ++i) {
        const double* s = src.data() + (row0 + i) * stride + col0;
        std::copy(s, s + cols, out.data() + i * cols);
    }
    return out;
}

void add_block(Tensor& dst, const Tensor& block, int64_t row0, int64_t col0) {
    const int64_t stride = dst.cols();
    for (int64_t i = 0; i < block.rows(); ++i) {
        double* d = dst.data() + (row0 + i) * stride + col0;
        const double* s = block.data() + i * block.cols();
        for (int64_t j = 0; j < block.cols(); ++j) d[j] += s[j];
    }
}

void write_block(Tensor& dst, const Tensor& block, int64_t row0, int64_t col0) {
    const int64_t stride = dst.cols();
    for (int64_t i = 0; i < block.rows(); ++i) {
        double* d = dst.data() + (row0 + i) * stride + col0;
        const double* s = block.data() + i * block.cols();
        std::copy(s, s + block.cols(), d);
    }
}

}  // namespace

Linear::Linear(const std::string& name, int64_t in, int64_t out, Rng& rng)
    : weight(name + ".weight", Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)))),
      bias(name + ".bias", Tensor({out})) {}

Var Linear::forward(const Var& x) const {
    return add_rowvec(matmul(x, weight.var()), bias.var());
}

void Linear::params(ParameterList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

LayerNormModule::LayerNormModule(const std::string& name, int64_t dim)
    : gain(name + ".gain", Tensor::full({dim}, 1.0)), bias(name + ".bias", Tensor({dim})) {}

Var LayerNormModule::forward(const Var& x) const {
    return layer_norm(x, gain.var(), bias.var());
}

void LayerNormModule::params(ParameterList& out) {
    out.push_back(&gain);
    out.push_back(&bias);
}

Var attention(const Var& q, const Var& k, const Var& v, int64_t batch, int64_t heads) {
    const Tensor& qv = q.value();
    require(qv.rank() == 2 && qv.same_shape(k.value()) && qv.same_shape(v.value()),
            ErrorKind::Dimension, "attention expects equal [batch*seq x dim] inputs");
    const int64_t dim = qv.cols();
    require(heads >= 1 && dim % heads == 0, ErrorKind::Dimension,
            "attention head count " + std::to_string(heads) + " must divide dim " + std::to_string(dim));
    require(batch >= 1 && qv.rows() % batch == 0, ErrorKind::Dimension,
            "attention batch " + std::to_string(batch) + " must divide rows " + std::to_string(qv.rows()));
    const int64_t seq = qv.rows() / batch;
    const int64_t hd = dim / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor out(qv.shape());
    // One probability matrix per (sample, head), kept alive for backward.
    auto probs = std::make_shared<std::vector<Tensor>>();
    probs->reserve(static_cast<size_t>(batch * heads));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            Tensor qb = copy_block(qv, b * seq, h * hd, seq, hd);
            Tensor kb = copy_block(k.value(), b * seq, h * hd, seq, hd);
            Tensor vb = copy_block(v.value(), b * seq, h * hd, seq, hd);
            Tensor scores;
            gemm(qb, false, kb, true, inv_scale, scores, 0.0);
            Tensor p = softmax_rows(scores);
            Tensor ob = matmul(p, vb);
            write_block(out, ob, b * seq, h * hd);
            probs->push_back(std::move(p));
        }
    }
    check_finite(out, "attention");

    auto fn = [batch, heads, seq, hd, inv_scale, probs](const Tensor& g, const Tensor&,
                                                        std::span<Var> ps) {
        const Tensor& qv = ps[0].value();
        const Tensor& kv = ps[1].value();
        const Tensor& vv = ps[2].value();
        Tensor* dq = ps[0].requires_grad() ? &grad_buffer(ps[0]) : nullptr;
        Tensor* dk = ps[1].requires_grad() ? &grad_buffer(ps[1]) : nullptr;
        Tensor* dv = ps[2].requires_grad() ? &grad_buffer(ps[2]) : nullptr;
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t h = 0; h < heads; ++h) {
                const Tensor& p = (*probs)[static_cast<size_t>(b * heads + h)];
                Tensor gb = copy_block(g, b * seq, h * hd, seq, hd);
                Tensor vb = copy_block(vv, b * seq, h * hd, seq, hd);
                if (dv) {
                    Tensor dvb;
                    gemm(p, true, gb, false, 1.0, dvb, 0.0);
                    add_block(*dv, dvb, b * seq, h * hd);
                }
                if (!dq && !dk) continue;
                Tensor dp;
                gemm(gb, false, vb, true, 1.0, dp, 0.0);
                // dS = P o (dP - rowsum(dP o P))
                Tensor ds(dp.shape());
                for (int64_t i = 0; i < seq; ++i) {
                    const double* pi = p.data() + i * seq;
                    const double* dpi = dp.data() + i * seq;
                    double acc = 0.0;
                    for (int64_t j = 0; j < seq; ++j) acc += dpi[j] * pi[j];
                    double* dsi = ds.data() + i * seq;
                    for (int64_t j = 0; j < seq; ++j) dsi[j] = pi[j] * (dpi[j] - acc);
                }
                if (dq) {
                    Tensor kb = copy_block(kv, b * seq, h * hd, seq, hd);
                    Tensor dqb;
                    gemm(ds, false, kb, false, inv_scale, dqb, 0.0);
                    add_block(*dq, dqb, b * seq, h * hd);
                }
                if (dk) {
                    Tensor qb = copy_block(qv, b * seq, h * hd, seq, hd);
                    Tensor dkb;
                    gemm(ds, true, qb, false, inv_scale, dkb, 0.0);
                    add_block(*dk, dkb, b * seq, h * hd);
                }
            }
        }
    };
    return Var::make(std::move(out), {q, k, v}, std::move(fn));
}

Var replace_rows_with(const Var& x, const Var& row, std::vector<uint8_t> mask) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    require(xv.rank() == 2, ErrorKind::Dimension, "replace_rows_with expects a matrix");
    require(rv.size() == xv.cols(), ErrorKind::Dimension,
            "replace_rows_with row has " + std::to_string(rv.size()) + " values, need " +
                std::to_string(xv.cols()));
    require(static_cast<int64_t>(mask.size()) == xv.rows(), ErrorKind::Dimension,
            "replace_rows_with mask covers " + std::to_string(mask.size()) + " of " +
                std::to_string(xv.rows()) + " rows");
    const int64_t cols = xv.cols();
    Tensor out = xv;
    for (int64_t i = 0; i < out.rows(); ++i) {
        if (mask[static_cast<size_t>(i)]) {
            std::copy(rv.data(), rv.data() + cols, out.data() + i * cols);
        }
    }
    auto shared = std::make_shared<std::vector<uint8_t>>(std::move(mask));
    auto fn = [shared, cols](const Tensor& g, const Tensor&, std::span<Var> ps) {
        const std::vector<uint8_t>& m = *shared;
        if (ps[0].requires_grad()) {
            Tensor& dx = grad_buffer(ps[0]);
            for (int64_t i = 0; i < g.rows(); ++i) {
                if (m[static_cast<size_t>(i)]) continue;
                const double* gi = g.data() + i * cols;
                double* di = dx.data() + i * cols;
                for (int64_t j = 0; j < cols; ++j) di[j] += gi[j];
            }
        }
        if (ps[1].requires_grad()) {
            Tensor& dr = grad_buffer(ps[1]);
            for (int64_t i = 0; i < g.rows(); ++i) {
                if (!m[static_cast<size_t>(i)]) continue;
                const double* gi = g.data() + i * cols;
                for (int64_t j = 0; j < cols; ++j) dr[j] += gi[j];
            }
        }
    };
    return Var::make(std::move(out), {x, row}, std::move(fn));
}

TransformerLayer::TransformerLayer(const std::string& name, int64_t dim, int64_t heads, Rng& rng)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      wq(name + ".wq", dim, dim, rng),
      wk(name + ".wk", dim, dim, rng),
      wv(name + ".wv", dim, dim, rng),
      wo(name + ".wo", dim, dim, rng),
      mlp1(name + ".mlp1", dim, 4 * dim, rng),
      mlp2(name + ".mlp2", 4 * dim, dim, rng),
      heads(heads) {}

Var TransformerLayer::forward(const Var& x, int64_t batch) const {
    Var n1 = ln1.forward(x);
    Var att = attention(wq.forward(n1), wk.forward(n1), wv.forward(n1), batch, heads);
    Var h = add(x, wo.forward(att));
    Var n2 = ln2.forward(h);
    return add(h, mlp2.forward(gelu(mlp1.forward(n2))));
}

void TransformerLayer::params(ParameterList& out) {
    ln1.params(out);
    ln2.params(out);
    wq.params(out);
    wk.params(out);
    wv.params(out);
    wo.params(out);
    mlp1.params(out);
    mlp2.params(out);
}

TransformerEncoder::TransformerEncoder(const std::string& name, int64_t dim, int64_t heads,
                                       int64_t layers, Rng& rng)
    : final_norm(name + ".final_norm", dim), dim(dim) {
    require(layers >= 1, ErrorKind::Config, "encoder needs at least one layer");
    require(heads >= 1 && dim % heads == 0, ErrorKind::Config,
            "encoder heads must divide dim: " + std::to_string(heads) + " vs " + std::to_string(dim));
    blocks.reserve(static_cast<size_t>(layers));
    for (int64_t i = 0; i < layers; ++i)
        blocks.emplace_back(name + ".layer" + std::to_string(i), dim, heads, rng);
}

Var TransformerEncoder::forward(const Var& tokens, int64_t batch) const {
    Var x = tokens;
    for (const TransformerLayer& layer : blocks) x = layer.forward(x, batch);
    return final_norm.forward(x);
}

void TransformerEncoder::params(ParameterList& out) {
    for (TransformerLayer& layer : blocks) layer.params(out);
    final_norm.params(out);
}

int64_t TransformerEncoder::parameter_count(int64_t dim, int64_t /*heads*/, int64_t layers) {
    return layers * (12 * dim * dim + 13 * dim) + 2 * dim;
}

Tensor sinusoidal_table(int64_t positions, int64_t dim) {
    require(dim >= 2 && dim % 2 == 0, ErrorKind::Dimension,
            "sinusoidal table needs an even dim >= 2, got " + std::to_string(dim));
    Tensor t({positions, dim});
    for (int64_t p = 0; p < positions; ++p) {
        for (int64_t i = 0; i < dim / 2; ++i) {
            const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
            t.at(p, 2 * i) = std::sin(static_cast<double>(p) * w);
            t.at(p, 2 * i + 1) = std::cos(static_cast<double>(p) * w);
        }
    }
    return t;
}

}  // namespace motiondiff

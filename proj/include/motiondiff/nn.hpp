#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiondiff/autodiff.hpp"
#include "motiondiff/rng.hpp"

namespace motiondiff {

// Network building blocks. All sequence tensors are packed row-major as
// [batch * seq, dim]: sample b's token t lives in row b * seq + t. Modules
// register their parameters under dotted names so checkpoints can address
// them individually.

struct Linear {
    Linear() = default;
    // Weight is [in x out], initialized N(0, 1/in); bias starts at zero.
    Linear(const std::string& name, int64_t in, int64_t out, Rng& rng);

    Var forward(const Var& x) const;
    void params(ParameterList& out);

    Parameter weight;
    Parameter bias;
};

struct LayerNormModule {
    LayerNormModule() = default;
    LayerNormModule(const std::string& name, int64_t dim);

    Var forward(const Var& x) const;
    void params(ParameterList& out);

    Parameter gain;
    Parameter bias;
};

// Scaled dot-product attention over every (sample, head) pair. q, k, v are
// [batch * seq, dim] with dim divisible by heads; attention never crosses
// sample boundaries. Softmax probabilities are cached for the backward pass.
Var attention(const Var& q, const Var& k, const Var& v, int64_t batch, int64_t heads);

// Row-wise substitution: rows of x where mask is set are replaced by `row`
// (a single [dim] vector, typically a learned null embedding). Gradients
// route to x on kept rows and to `row` on replaced ones.
Var replace_rows_with(const Var& x, const Var& row, std::vector<uint8_t> mask);

// Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)) with a GELU and a
// 4x hidden expansion.
struct TransformerLayer {
    TransformerLayer(const std::string& name, int64_t dim, int64_t heads, Rng& rng);

    Var forward(const Var& x, int64_t batch) const;
    void params(ParameterList& out);

    LayerNormModule ln1, ln2;
    Linear wq, wk, wv, wo;
    Linear mlp1, mlp2;
    int64_t heads = 1;
};

struct TransformerEncoder {
    TransformerEncoder() = default;
    TransformerEncoder(const std::string& name, int64_t dim, int64_t heads, int64_t layers,
                       Rng& rng);

    Var forward(const Var& tokens, int64_t batch) const;
    void params(ParameterList& out);

    // Parameters per layer are 12*dim^2 + 13*dim, plus 2*dim for the final
    // norm; used by tests as a structural check.
    static int64_t parameter_count(int64_t dim, int64_t heads, int64_t layers);

    std::vector<TransformerLayer> blocks;
    LayerNormModule final_norm;
    int64_t dim = 0;
};

// Fixed sinusoidal table: row p is [sin(p * w_0), cos(p * w_0), ...] with
// w_i = 10000^(-2i/dim). dim must be even.
Tensor sinusoidal_table(int64_t positions, int64_t dim);

}  // namespace motiondiff

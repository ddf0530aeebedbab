#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "motiondiff/autodiff.hpp"

namespace motiondiff::testing {

// Central finite differences against reverse-mode gradients. `loss_fn` must
// rebuild its graph from the live parameter values on every call and return
// a scalar. Returns the worst absolute disagreement over every element of
// every parameter.
inline double max_grad_error(const std::function<Var()>& loss_fn, const ParameterList& params,
                             double step = 1e-4) {
    zero_grad(params);
    Var loss = loss_fn();
    backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad());

    double worst = 0.0;
    NoGradGuard guard;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& v = params[pi]->mutable_value();
        for (int64_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + step;
            const double fp = loss_fn().value().item();
            v[i] = keep - step;
            const double fm = loss_fn().value().item();
            v[i] = keep;
            const double fd = (fp - fm) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - analytic[pi][i]));
        }
    }
    return worst;
}

}  // namespace motiondiff::testing

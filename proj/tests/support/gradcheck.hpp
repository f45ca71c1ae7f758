#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif::testing {

// sum(x * w) with w fixed; turns any op output into a scalar with a dense gradient.
inline Var weighted_sum(Graph<double>& g, Var x, const Tensor<double>& w) {
    const auto& xv = g.value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * w[i];
    return g.record("weighted_sum", Tensor<double>::scalar(s), {x}, [x, w](Graph<double>& gr, const Tensor<double>& dy) {
        auto& gx = gr.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[0] * w[i];
    });
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = uniform(rng, lo, hi);
    return t;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "input k, element i"
};

// Builds the graph from `inputs` and returns the op output; the check compares
// reverse-mode gradients of weighted_sum(output) against central differences.
using GraphBuilder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

inline GradCheckResult grad_check(const std::vector<Tensor<double>>& inputs, const GraphBuilder& build,
                                  std::uint64_t seed, double h = 1e-6, double floor = 1e-5) {
    Rng rng(seed);
    Tensor<double> w;
    auto evaluate = [&](const std::vector<Tensor<double>>& xs, std::vector<Tensor<double>>* grads) {
        Graph<double> g;
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(g.leaf(x, true));
        const Var out = build(g, vars);
        if (w.empty()) w = random_tensor(g.value(out).shape(), rng);
        const Var loss = weighted_sum(g, out, w);
        if (grads) {
            g.run_backward(loss);
            for (const Var v : vars) grads->push_back(g.grad(v));
        }
        return g.value(loss)[0];
    };
    std::vector<Tensor<double>> analytic;
    evaluate(inputs, &analytic);

    GradCheckResult r;
    std::vector<Tensor<double>> xs = inputs;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            const double orig = xs[k][i];
            xs[k][i] = orig + h;
            const double fp = evaluate(xs, nullptr);
            xs[k][i] = orig - h;
            const double fm = evaluate(xs, nullptr);
            xs[k][i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > r.max_rel_error) {
                r.max_rel_error = rel;
                r.worst = "input " + std::to_string(k) + ", element " + std::to_string(i);
            }
        }
    }
    return r;
}

} // namespace spliif::testing

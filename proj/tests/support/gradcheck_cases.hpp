#pragma once

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "spliif/interp/bilinear.hpp"
#include "spliif/interp/idw.hpp"
#include "spliif/numerics/ops.hpp"

namespace spliif::testing {

struct GradCase {
    std::string name;
    std::vector<Tensor<double>> inputs;
    GraphBuilder build;
};

// Away from the relu kink so central differences stay on one side.
inline Tensor<double> away_from_zero(Tensor<double> t, double gap = 0.05) {
    for (auto& v : t.data())
        if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
    return t;
}

inline std::vector<GradCase> gradient_cases(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCase> cases;

    cases.push_back({"linear", {random_tensor({4, 5}, rng), random_tensor({5, 3}, rng), random_tensor({3}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return linear(g, v[0], v[1], v[2]); }});

    cases.push_back({"linear_channels",
                     {random_tensor({3, 4, 5}, rng), random_tensor({3, 2}, rng), random_tensor({2}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return linear_channels(g, v[0], v[1], v[2]); }});

    cases.push_back({"conv2d_3x3",
                     {random_tensor({2, 5, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return conv2d_3x3(g, v[0], v[1], v[2]); }});

    // Window [2:7, 1:6] of a 9x8 image, output on its exact interior.
    cases.push_back({"conv2d_3x3_windowed",
                     {random_tensor({2, 5, 5}, rng), random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) {
                         const Window in{2, 1, 5, 5};
                         return conv2d_3x3(g, v[0], in, 9, 8, v[1], v[2], conv3x3_valid_window(in, 9, 8));
                     }});

    cases.push_back({"relu", {away_from_zero(random_tensor({3, 4}, rng))},
                     [](Graph<double>& g, const std::vector<Var>& v) { return relu(g, v[0]); }});

    {
        Tensor<double> target = random_tensor({5, 3}, rng);
        Tensor<double> mask({5, 3}, 1.0);
        mask.at(1, 2) = 0.0;
        mask.at(3, 0) = 0.0;
        cases.push_back({"l1_loss", {random_tensor({5, 3}, rng, 1.5, 2.5)},
                         [target, mask](Graph<double>& g, const std::vector<Var>& v) {
                             return l1_loss(g, v[0], target, mask);
                         }});
    }

    cases.push_back({"bilinear_resize_up", {random_tensor({2, 3, 4}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return bilinear_resize(g, v[0], 7, 9); }});
    cases.push_back({"bilinear_resize_down", {random_tensor({2, 8, 6}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return bilinear_resize(g, v[0], 3, 4); }});

    {
        const GridSpec grid{10.0, 20.0, 0.5, 6, 5};
        std::vector<LonLat> q;
        for (int i = 0; i < 6; ++i) q.push_back({uniform(rng, 10.0, 13.0), uniform(rng, 20.0, 22.5)});
        cases.push_back({"sample_at_coords", {random_tensor({3, 5, 6}, rng)},
                         [grid, q](Graph<double>& g, const std::vector<Var>& v) {
                             return sample_at_coords(g, v[0], grid, std::span<const LonLat>(q));
                         }});
    }

    {
        const GridSpec grid{0.0, 0.0, 0.25, 6, 5};
        auto pos = std::make_shared<std::vector<LonLat>>();
        for (int i = 0; i < 7; ++i) pos->push_back({uniform(rng, -0.2, 1.7), uniform(rng, -0.2, 1.4)});
        Tensor<double> mask({7, 2}, 1.0);
        mask.at(2, 1) = 0.0;
        mask.at(5, 0) = 0.0;
        Tensor<double> expo({2});
        Tensor<double> len({2});
        expo[0] = softplus_inverse(2.0);
        expo[1] = softplus_inverse(1.3);
        len[0] = softplus_inverse(0.7);
        len[1] = softplus_inverse(1.6);
        cases.push_back({"idw_densify", {random_tensor({7, 2}, rng), expo, len},
                         [grid, pos, mask](Graph<double>& g, const std::vector<Var>& v) {
                             return idw_densify(g, std::span<const LonLat>(*pos), v[0], &mask, grid, v[1], v[2],
                                                IdwSettings{4, 1e-6});
                         }});
    }

    cases.push_back({"add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return add(g, v[0], v[1]); }});
    cases.push_back({"mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return mul(g, v[0], v[1]); }});
    cases.push_back({"concat", {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
                     [](Graph<double>& g, const std::vector<Var>& v) { return concat(g, {v[0], v[1]}); }});
    return cases;
}

} // namespace spliif::testing

#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "spliif/model/checkpoint.hpp"
#include "spliif/model/params.hpp"
#include "spliif/model/spliif.hpp"

using namespace spliif;
using namespace spliif::testing;

TEST(ParamLayout, NamesAreUniqueAndOrdered) {
    const SpliifConfig cfg;
    const auto layout = param_layout(cfg);
    std::set<std::string> names;
    for (const auto& s : layout) names.insert(s.name);
    EXPECT_EQ(names.size(), layout.size());
    EXPECT_EQ(layout.front().name, "idw.exponent_raw");
    EXPECT_EQ(layout.back().name, "decoder_mlp.2.bias");
    // 2 IDW + 6 proj + 2 fuse + 8*4 trunk + 2 final + 6 decoder
    EXPECT_EQ(layout.size(), 50u);
}

TEST(ParamLayout, DefaultElementCount) {
    const SpliifConfig cfg;
    const auto p = SpliifParams<float>::zeros(cfg);
    const std::size_t proj = 3 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64;
    const std::size_t fuse = 65 * 64 + 64;
    const std::size_t trunk = 17 * (64 * 64 * 9 + 64);
    const std::size_t dec = 66 * 128 + 128 + 128 * 128 + 128 + 128 * 3 + 3;
    EXPECT_EQ(p.element_count(), 6 + proj + fuse + trunk + dec);
}

TEST(ParamInit, SeededAndBounded) {
    const SpliifConfig cfg = tiny_model();
    const auto a = SpliifParams<float>::initialize(cfg, 3);
    const auto b = SpliifParams<float>::initialize(cfg, 3);
    const auto c = SpliifParams<float>::initialize(cfg, 4);
    bool differs = false;
    const auto layout = param_layout(cfg);
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        EXPECT_TRUE(bitwise_equal(a.tensors[i], b.tensors[i]));
        differs = differs || !bitwise_equal(a.tensors[i], c.tensors[i]);
        if (layout[i].fan_in == 0) continue;
        const double bound = std::sqrt(1.0 / static_cast<double>(layout[i].fan_in));
        for (const float v : a.tensors[i].data()) EXPECT_LE(std::abs(v), bound);
    }
    EXPECT_TRUE(differs);
    EXPECT_NEAR(softplus(a.get("idw.exponent_raw")[0]), 2.0, 1e-6);
    EXPECT_NEAR(softplus(a.get("idw.length_scale_raw")[2]), 1.0, 1e-6);
}

TEST(SpliifConfig, ValidateRejectsBadShapes) {
    SpliifConfig c;
    c.fine_h = 250;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SpliifConfig{};
    c.c_out = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SpliifConfig{};
    c.mlp_depth = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forward, StageShapes) {
    const SpliifConfig cfg = tiny_model();
    Rng rng(1);
    const auto in = random_forward_inputs<double>(cfg, rng, 9, 5);
    const auto params = SpliifParams<float>::initialize(cfg, 1).cast<double>();
    Graph<double> g;
    const ModelVars mv = bind_params(g, cfg, params, false);
    const Var l0 = encode(g, mv, cfg, in.stations, static_cast<const Tensor<double>*>(nullptr), in.grid_coarse);
    EXPECT_EQ(g.value(l0).shape(), (Shape{8, 8, 8}));
    const FuseResult fused = fuse_topography(g, mv, cfg, l0, in.topo);
    EXPECT_EQ(g.value(fused.l1).shape(), (Shape{9, 32, 32}));
    const Var f = edsr_trunk(g, mv, cfg, fused.f0);
    EXPECT_EQ(g.value(f).shape(), (Shape{8, 32, 32}));
    EXPECT_EQ(g.value(decode(g, mv, cfg, f, in.grid_fine, in.queries)).shape(), (Shape{5, 3}));
}

TEST(Forward, WindowedTrunkEqualsFullGrid) {
    SpliifConfig cfg = tiny_model();
    cfg.edsr_blocks = 2;
    Rng rng(2);
    auto in = random_forward_inputs<double>(cfg, rng, 12, 4);
    // Include queries on the footprint corners so windows touch every border.
    in.queries.push_back({0.0, 0.0});
    in.queries.push_back({in.grid_fine.lon_max() - 1e-9, in.grid_fine.lat_max() - 1e-9});
    const auto params = SpliifParams<float>::initialize(cfg, 2).cast<double>();

    Graph<double> g;
    const ModelVars mv = bind_params(g, cfg, params, false);
    const Var windowed = forward(g, mv, cfg, in);
    const Var l0 = encode(g, mv, cfg, in.stations, static_cast<const Tensor<double>*>(nullptr), in.grid_coarse);
    const Var f = edsr_trunk(g, mv, cfg, fuse_topography(g, mv, cfg, l0, in.topo).f0);
    const Var full = decode(g, mv, cfg, f, in.grid_fine, in.queries);
    const auto& a = g.value(windowed);
    const auto& b = g.value(full);
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Forward, StationOrderDoesNotMatter) {
    const SpliifConfig cfg = tiny_model();
    Rng rng(3);
    const auto in = random_forward_inputs<double>(cfg, rng, 10, 6);
    const auto params = SpliifParams<float>::initialize(cfg, 3).cast<double>();
    const auto base = predict(cfg, params, in);
    auto perm = in;
    std::vector<std::size_t> order(10);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (std::size_t n = 0; n < 10; ++n) {
        perm.stations.positions[n] = in.stations.positions[order[n]];
        for (std::size_t c = 0; c < 3; ++c) perm.stations.values.at(n, c) = in.stations.values.at(order[n], c);
    }
    EXPECT_TRUE(bitwise_equal(predict(cfg, params, perm), base));
}

TEST(Forward, RejectsMismatchedInputs) {
    const SpliifConfig cfg = tiny_model();
    Rng rng(4);
    auto in = random_forward_inputs<float>(cfg, rng, 5, 2);
    const auto params = SpliifParams<float>::initialize(cfg, 4);
    auto bad = in;
    bad.grid_coarse = in.grid_fine.resampled(16, 16);
    EXPECT_THROW(predict(cfg, params, bad), ConfigError);
    bad = in;
    bad.topo = Tensor<float>({1, 16, 16});
    EXPECT_THROW(predict(cfg, params, bad), DimensionError);
    bad = in;
    bad.queries.clear();
    EXPECT_THROW(predict(cfg, params, bad), InputError);
    bad = in;
    bad.queries = {{-1.0, 0.5}};
    EXPECT_THROW(predict(cfg, params, bad), InputError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    const SpliifConfig cfg = tiny_model();
    Checkpoint ck{cfg, SpliifParams<float>::initialize(cfg, 5), std::nullopt};
    TempDir dir("ckpt");
    save_checkpoint(ck, dir / "a.splf");
    const Checkpoint back = load_checkpoint(dir / "a.splf");
    EXPECT_EQ(back.config, cfg);
    EXPECT_FALSE(back.train.has_value());
    ASSERT_EQ(back.params.tensors.size(), ck.params.tensors.size());
    for (std::size_t i = 0; i < ck.params.tensors.size(); ++i)
        EXPECT_TRUE(bitwise_equal(back.params.tensors[i], ck.params.tensors[i])) << ck.params.names[i];
    EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
}

TEST(Checkpoint, TrainStateSurvives) {
    const SpliifConfig cfg = tiny_model();
    auto params = SpliifParams<float>::initialize(cfg, 6);
    AdamState<float> adam(params.tensors, AdamConfig{});
    adam.step = 0x1234567890ULL;
    adam.m[3][0] = 0.25f;
    adam.v[5][1] = 1e-20f;
    const Checkpoint ck{cfg, params, TrainState{0xfeedfacecafebeefULL, 777, adam}};
    const Checkpoint back = decode_checkpoint(encode_checkpoint(ck));
    ASSERT_TRUE(back.train.has_value());
    EXPECT_EQ(back.train->seed, 0xfeedfacecafebeefULL);
    EXPECT_EQ(back.train->step, 777u);
    EXPECT_EQ(back.train->adam.step, 0x1234567890ULL);
    EXPECT_EQ(back.train->adam.m[3][0], 0.25f);
    EXPECT_EQ(back.train->adam.v[5][1], 1e-20f);
}

TEST(Checkpoint, TruncatedAndCorruptFilesAreRejected) {
    const SpliifConfig cfg = tiny_model();
    const auto bytes = encode_checkpoint({cfg, SpliifParams<float>::initialize(cfg, 7), std::nullopt});
    for (const std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{11}, bytes.size() / 2, bytes.size() - 1}) {
        auto b = bytes;
        b.resize(cut);
        EXPECT_THROW(decode_checkpoint(b), FormatError) << cut;
    }
    auto b = bytes;
    b[0] = 'X';
    EXPECT_THROW(decode_checkpoint(b), FormatError);
    b = bytes;
    b[4] = 2;
    EXPECT_THROW(decode_checkpoint(b), FormatError);
    b = bytes;
    b.push_back(0);
    EXPECT_THROW(decode_checkpoint(b), FormatError);
}

TEST(Checkpoint, ConfigMismatchNamesTheTensor) {
    SpliifConfig file_cfg;
    file_cfg.c_l = 64;
    SpliifConfig want = file_cfg;
    want.c_l = 32;
    const auto bytes = encode_checkpoint({file_cfg, SpliifParams<float>::zeros(file_cfg), std::nullopt});
    try {
        decode_checkpoint(bytes, &want);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("proj_mlp.2.weight"), std::string::npos) << e.what();
    }
    EXPECT_NO_THROW(decode_checkpoint(bytes, &file_cfg));
}

TEST(Checkpoint, MissingFileIsAnIoError) {
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.splf"), IoError);
}

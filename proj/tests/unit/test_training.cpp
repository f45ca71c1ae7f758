#include <gtest/gtest.h>

#include <limits>

#include "fixtures.hpp"
#include "spliif/data/synth_world.hpp"
#include "spliif/training/train.hpp"

using namespace spliif;
using namespace spliif::testing;

namespace {

struct World {
    Dataset data = SynthWorld(small_world()).to_dataset();
    DataSplit split = make_split(data, 0.3, 0.1, 1);
};

const World& world() {
    static const World w;
    return w;
}

TrainConfig quick(std::size_t steps, std::uint64_t seed = 0) {
    TrainConfig c;
    c.seed = seed;
    c.steps = steps;
    c.batch_patches = 2;
    c.log_every = 5;
    c.checkpoint_every = 0;
    return c;
}

bool same_params(const SpliifParams<float>& a, const SpliifParams<float>& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        if (!bitwise_equal(a.tensors[i], b.tensors[i])) return false;
    return true;
}

} // namespace

TEST(TrainConfig, RejectsZeroSteps) {
    TrainConfig c;
    c.steps = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(Trainer(tiny_model(), c, world().data, world().split, small_patch_protocol()), ConfigError);
    c = TrainConfig{};
    c.adam.lr = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, RequiresStationChannels) {
    SpliifConfig m = tiny_model();
    m.c_d = 2;
    try {
        Trainer t(m, quick(1), world().data, world().split, small_patch_protocol());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("c_d", 0), 0u) << e.what();
    }
}

TEST(Trainer, SameSeedSameParameters) {
    Trainer a(tiny_model(), quick(4, 9), world().data, world().split, small_patch_protocol());
    Trainer b(tiny_model(), quick(4, 9), world().data, world().split, small_patch_protocol());
    Trainer c(tiny_model(), quick(4, 10), world().data, world().split, small_patch_protocol());
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(a.train_step(), b.train_step());
        c.train_step();
    }
    EXPECT_TRUE(same_params(a.params(), b.params()));
    EXPECT_FALSE(same_params(a.params(), c.params()));
    EXPECT_EQ(encode_checkpoint(a.checkpoint()), encode_checkpoint(b.checkpoint()));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
    TempDir dir("resume");
    Trainer full(tiny_model(), quick(100, 3), world().data, world().split, small_patch_protocol());
    run_training(full, {dir / "full.splf", dir / "full.csv"});

    Trainer first(tiny_model(), quick(50, 3), world().data, world().split, small_patch_protocol());
    run_training(first, {dir / "half.splf", dir / "half.csv"});
    const Checkpoint ck = load_checkpoint(dir / "half.splf");
    ASSERT_TRUE(ck.train.has_value());
    EXPECT_EQ(ck.train->step, 50u);
    Trainer second(ck, quick(100, 3), world().data, world().split, small_patch_protocol());
    run_training(second, {dir / "half.splf", dir / "half.csv"});

    EXPECT_TRUE(same_params(full.params(), second.params()));
    EXPECT_EQ(read_file_bytes(dir / "full.splf"), read_file_bytes(dir / "half.splf"));
    EXPECT_EQ(read_file_text(dir / "full.csv"), read_file_text(dir / "half.csv"));
}

TEST(Trainer, ResumeWithOtherSeedIsRejected) {
    Trainer t(tiny_model(), quick(1, 3), world().data, world().split, small_patch_protocol());
    t.train_step();
    EXPECT_THROW(Trainer(t.checkpoint(), quick(2, 4), world().data, world().split, small_patch_protocol()),
                 ConfigError);
    const Checkpoint bare{tiny_model(), t.params(), std::nullopt};
    EXPECT_THROW(Trainer(bare, quick(2, 3), world().data, world().split, small_patch_protocol()), FormatError);
}

TEST(Trainer, FixedPatchLossDecreases) {
    TrainConfig c = quick(60, 1);
    c.fixed_patch = true;
    c.batch_patches = 1;
    c.adam.lr = 3e-3;
    Trainer t(tiny_model(), c, world().data, world().split, small_patch_protocol());
    const double first = t.train_step();
    double last = first;
    while (t.step() < c.steps) last = t.train_step();
    EXPECT_LT(last, 0.5 * first);
}

TEST(Trainer, NonFiniteParametersAreReported) {
    Trainer t(tiny_model(), quick(1), world().data, world().split, small_patch_protocol());
    Checkpoint ck = t.checkpoint();
    ck.params.get("fuse.bias")[0] = std::numeric_limits<float>::quiet_NaN();
    Trainer bad(ck, quick(2), world().data, world().split, small_patch_protocol());
    try {
        bad.train_step();
        FAIL();
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
    }
}

TEST(Trainer, TargetsNeverReachTheModelInputs) {
    const auto& w = world();
    Rng rng(5);
    Patch p = sample_patch(w.data.observations[0], w.data.world, w.data.topography, rng, small_patch_protocol(),
                           tiny_model());
    const auto params = SpliifParams<float>::initialize(tiny_model(), 5);
    const auto queries = positions_of(p.target_stations);
    const auto before = predict(tiny_model(), params, patch_inputs<float>(p.geometry, p.input_stations, queries));
    for (auto& s : p.target_stations) {
        s.temperature += 25.0;
        s.wind_speed += 9.0;
    }
    const auto after = predict(tiny_model(), params, patch_inputs<float>(p.geometry, p.input_stations, queries));
    EXPECT_TRUE(bitwise_equal(before, after));
}

TEST(LossTrace, AppendAndTruncate) {
    TempDir dir("trace");
    const auto path = dir / "loss.csv";
    append_loss_line(path, {10, 0.5});
    append_loss_line(path, {20, 0.25});
    append_loss_line(path, {30, 0.125});
    EXPECT_EQ(read_file_text(path), "step,loss\n10,0.5\n20,0.25\n30,0.125\n");
    truncate_loss_trace(path, 20);
    EXPECT_EQ(read_file_text(path), "step,loss\n10,0.5\n20,0.25\n");
}

TEST(LossTrace, RunTrainingLogsOnSchedule) {
    TempDir dir("sched");
    TrainConfig c = quick(12);
    Trainer t(tiny_model(), c, world().data, world().split, small_patch_protocol());
    std::ostringstream log;
    const auto trace = run_training(t, {dir / "c.splf", dir / "l.csv"}, &log);
    ASSERT_EQ(trace.size(), 3u);
    EXPECT_EQ(trace[0].step, 5u);
    EXPECT_EQ(trace[2].step, 12u);
    EXPECT_NE(log.str().find("step 12 loss "), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "c.splf"));
}

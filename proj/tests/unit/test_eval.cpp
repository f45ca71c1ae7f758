#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "spliif/data/normalize.hpp"
#include "spliif/data/synth_world.hpp"
#include "spliif/eval/evaluate.hpp"
#include "spliif/eval/histogram.hpp"
#include "spliif/eval/metrics.hpp"
#include "spliif/eval/render.hpp"

using namespace spliif;
using namespace spliif::testing;

namespace {

struct World {
    Dataset data = SynthWorld(small_world()).to_dataset();
    DataSplit split = make_split(data, 0.3, 0.3, 1);
};

const World& world() {
    static const World w;
    return w;
}

EvalProtocol small_protocol() {
    EvalProtocol p;
    p.patch_pixels = 64;
    p.patches_per_slice = 2;
    p.threads = 1;
    return p;
}

// Returns the recorded observation at each query, so its error is exactly zero.
Predictor observation_lookup() {
    return [](const EvalPatch& p, const std::vector<StationObservation>&, const std::vector<LonLat>& queries) {
        const auto& times = p.data->times;
        const auto t = static_cast<std::size_t>(std::find(times.begin(), times.end(), p.time_id) - times.begin());
        std::vector<PhysicalPrediction> out;
        for (const auto& q : queries) {
            for (const auto& o : p.data->observations.at(t)) {
                if (o.lon != q.lon || o.lat != q.lat) continue;
                const WindUV uv = wind_to_uv(o.wind_speed, o.wind_dir);
                out.push_back({o.temperature, uv.u, uv.v});
                break;
            }
        }
        return out;
    };
}

} // namespace

TEST(Metrics, SmallExamples) {
    const std::vector<double> pred = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> truth = {1.0, 0.0, 3.0, 8.0};
    EXPECT_DOUBLE_EQ(rmse(pred, truth), std::sqrt(20.0 / 4.0));
    EXPECT_DOUBLE_EQ(mean_abs_error(pred, truth), 1.5);
    EXPECT_DOUBLE_EQ(rmse(truth, truth), 0.0);
    EXPECT_THROW(rmse({}, {}), ContractError);
    EXPECT_THROW(mean_abs_error(pred, std::vector<double>{1.0}), ContractError);
}

TEST(Metrics, RmseBoundsMae) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(1 + uniform_index(rng, 40)), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = uniform(rng, -10.0, 10.0);
            b[i] = uniform(rng, -10.0, 10.0);
        }
        const double r = rmse(a, b), m = mean_abs_error(a, b);
        EXPECT_GE(r, m - 1e-12);
        EXPECT_LE(r, m * std::sqrt(static_cast<double>(a.size())) + 1e-12);
    }
}

TEST(Metrics, AngularError) {
    EXPECT_DOUBLE_EQ(angular_error(10.0, 350.0), 20.0);
    EXPECT_DOUBLE_EQ(angular_error(350.0, 10.0), 20.0);
    EXPECT_DOUBLE_EQ(angular_error(0.0, 180.0), 180.0);
    EXPECT_DOUBLE_EQ(angular_error(90.0, 90.0), 0.0);
    EXPECT_DOUBLE_EQ(angular_error(725.0, 0.0), 5.0);
}

TEST(Metrics, StatsMatchDirectFormulas) {
    const std::vector<double> pred = {0.5, -1.0, 2.0, 7.0, 3.0};
    const std::vector<double> truth = {0.0, 1.0, 2.5, 4.0, 3.0};
    ErrorStats a, b, all;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        (i < 2 ? a : b).add(pred[i] - truth[i]);
        all.add(pred[i] - truth[i]);
    }
    a.merge(b);
    EXPECT_EQ(a.count, 5u);
    EXPECT_DOUBLE_EQ(a.rmse(), rmse(pred, truth));
    EXPECT_DOUBLE_EQ(a.mae(), mean_abs_error(pred, truth));
    double pct = 0.0;
    EXPECT_TRUE(improvement_pct(1.0, 4.0, pct));
    EXPECT_DOUBLE_EQ(pct, 75.0);
    EXPECT_FALSE(improvement_pct(1.0, 0.0, pct));
}

TEST(Histogram, EdgesAndOverflow) {
    const auto edges = histogram_edges("temperature");
    ASSERT_EQ(edges.size(), 31u);
    EXPECT_DOUBLE_EQ(edges.back(), 15.0);
    EXPECT_EQ(histogram_edges("wind_speed").size(), 41u);
    EXPECT_EQ(histogram_edges("wind_angle").size(), 37u);
    EXPECT_THROW(histogram_edges("pressure"), ContractError);

    const auto bins = error_histogram({0.0, 0.5, 0.99, 1.0, 1.5, 2.0, 99.0}, {0.0, 1.0, 2.0});
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_DOUBLE_EQ(bins[0].density, 3.0 / 7.0);
    EXPECT_DOUBLE_EQ(bins[1].density, 4.0 / 7.0);
    EXPECT_THROW(error_histogram({}, {0.0, 1.0}), ContractError);
    EXPECT_THROW(error_histogram({1.0}, {1.0, 1.0}), ContractError);
}

TEST(Histogram, DensityIntegratesToOne) {
    Rng rng(8);
    for (const char* var : kEvalVariables) {
        std::vector<double> errs(500);
        for (auto& e : errs) e = std::abs(normal01(rng)) * 4.0;
        double area = 0.0;
        for (const auto& b : error_histogram(errs, histogram_edges(var))) area += b.density * (b.hi - b.lo);
        EXPECT_NEAR(area, 1.0, 1e-12) << var;
    }
}

TEST(Render, ConstantFieldIsMidGrey) {
    Tensor<float> f({1, 3, 5});
    f.fill(0.0f);
    const auto bytes = render_pgm(f, -1.0, 1.0);
    const std::string header = "P5\n5 3\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 15);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
    for (std::size_t i = header.size(); i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 128);
}

TEST(Render, RampAndNorthUpRows) {
    Tensor<double> f({1, 2, 4});
    for (std::size_t j = 0; j < 4; ++j) {
        f[j] = static_cast<double>(j);           // south row
        f[4 + j] = static_cast<double>(3 - j);   // north row
    }
    const auto bytes = render_pgm(f, 0.0, 3.0);
    const std::vector<std::uint8_t> body(bytes.end() - 8, bytes.end());
    EXPECT_EQ(body, (std::vector<std::uint8_t>{255, 170, 85, 0, 0, 85, 170, 255}));
    EXPECT_THROW(render_pgm(f, 1.0, 1.0), ContractError);
    EXPECT_THROW(render_pgm(Tensor<double>({2, 2, 2}), 0.0, 1.0), DimensionError);
}

TEST(Render, WindArrowsAverageBlocks) {
    Tensor<double> u({1, 4, 4}), v({1, 4, 4});
    for (std::size_t k = 0; k < 16; ++k) {
        u[k] = static_cast<double>(k % 4);
        v[k] = static_cast<double>(k / 4);
    }
    const auto arrows = overlay_wind(u, v, 2);
    ASSERT_EQ(arrows.size(), 4u);
    // Top-left image block covers the two northern grid rows, columns 0-1.
    EXPECT_DOUBLE_EQ(arrows[0].x, 1.0);
    EXPECT_DOUBLE_EQ(arrows[0].y, 1.0);
    EXPECT_DOUBLE_EQ(arrows[0].dx, 0.5);
    EXPECT_DOUBLE_EQ(arrows[0].dy, -2.5);
    EXPECT_DOUBLE_EQ(arrows[3].dx, 2.5);
    EXPECT_DOUBLE_EQ(arrows[3].dy, -0.5);
    EXPECT_EQ(format_arrows_csv({arrows[0]}), "x,y,dx,dy\n1,1,0.5,-2.5\n");
}

TEST(Evaluate, BaselineAgainstItselfIsZeroEverywhere) {
    const Predictor base = idw_baseline();
    const EvalResult r = evaluate(world().data, world().split, small_protocol(), &base, base);
    ASSERT_FALSE(r.summary.empty());
    for (const auto& row : r.summary) {
        EXPECT_EQ(row.mean, 0.0) << row.variable << " " << row.alt_lo;
        EXPECT_EQ(row.std_dev, 0.0);
    }
    for (const auto& row : r.rows) EXPECT_EQ(row.model.sum_sq, row.baseline.sum_sq);
}

TEST(Evaluate, PerfectPredictorScoresOneHundred) {
    const Predictor oracle = observation_lookup();
    const EvalResult r = evaluate(world().data, world().split, small_protocol(), &oracle, idw_baseline());
    const auto* all = r.find_summary("temperature", 5, true);
    ASSERT_NE(all, nullptr);
    for (const auto& row : r.summary) EXPECT_NEAR(row.mean, 100.0, 1e-6) << row.variable;
    for (const auto& row : r.rows) {
        EXPECT_LT(row.model.rmse(), 1e-9);
        EXPECT_GT(row.baseline.rmse(), 0.0);
    }
}

TEST(Evaluate, ThreadCountDoesNotChangeOutputs) {
    const SpliifConfig cfg = tiny_model();
    const auto params = SpliifParams<float>::initialize(cfg, 21);
    const Predictor model = model_predictor(cfg, params);
    EvalProtocol one = small_protocol(), four = small_protocol();
    four.threads = 4;
    const EvalResult a = evaluate(world().data, world().split, one, &model, idw_baseline());
    const EvalResult b = evaluate(world().data, world().split, four, &model, idw_baseline());
    EXPECT_GE(world().split.eval_times.size(), 4u);
    EXPECT_EQ(format_metrics_csv(a), format_metrics_csv(b));
    EXPECT_EQ(format_improvement_csv(a), format_improvement_csv(b));
    EXPECT_EQ(format_error_histograms(a.model_abs_errors), format_error_histograms(b.model_abs_errors));
}

TEST(Evaluate, BaselineOnlyOmitsImprovementColumns) {
    const EvalResult r = evaluate(world().data, world().split, small_protocol(), nullptr, idw_baseline());
    const std::string csv = format_metrics_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variable,alt_lo,alt_hi,n_input,rmse,mae,count");
    EXPECT_TRUE(r.summary.empty());
    TempDir dir("evalout");
    EXPECT_EQ(write_eval_outputs(r, dir.path()).size(), 2u);
    EXPECT_FALSE(std::filesystem::exists(dir / "improvement_summary.csv"));
}

TEST(Evaluate, NestedInputsAndHeldOutTargets) {
    const auto& w = world();
    std::vector<std::vector<std::string>> seen;
    const Predictor spy = [&](const EvalPatch&, const std::vector<StationObservation>& in,
                              const std::vector<LonLat>& queries) {
        std::vector<std::string> ids;
        for (const auto& s : in) {
            EXPECT_EQ(w.split.holdout_stations.count(s.station_id), 0u);
            ids.push_back(s.station_id);
        }
        seen.push_back(ids);
        return std::vector<PhysicalPrediction>(queries.size());
    };
    EvalProtocol p = small_protocol();
    p.patches_per_slice = 1;
    DataSplit one = w.split;
    one.eval_times.resize(1);
    evaluate(w.data, one, p, nullptr, spy);
    ASSERT_GE(seen.size(), 2u);
    for (std::size_t k = 1; k < seen.size(); ++k) {
        ASSERT_GT(seen[k].size(), seen[k - 1].size());
        EXPECT_TRUE(std::equal(seen[k - 1].begin(), seen[k - 1].end(), seen[k].begin()));
    }
}

TEST(Evaluate, SamplingFailureIsReported) {
    EvalProtocol p = small_protocol();
    p.n_inputs = {500};
    p.retry_cap = 3;
    EXPECT_THROW(evaluate(world().data, world().split, p, nullptr, idw_baseline()), SamplingError);
    p.patch_pixels = 128;
    EXPECT_THROW(evaluate(world().data, world().split, p, nullptr, idw_baseline()), SamplingError);
}

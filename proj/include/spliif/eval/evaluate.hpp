#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spliif/data/dataset.hpp"
#include "spliif/data/normalize.hpp"
#include "spliif/error.hpp"
#include "spliif/eval/histogram.hpp"
#include "spliif/eval/metrics.hpp"
#include "spliif/interp/idw.hpp"
#include "spliif/io.hpp"
#include "spliif/model/params.hpp"
#include "spliif/model/spliif.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/training/train.hpp"

namespace spliif {

struct EvalProtocol {
    std::uint64_t seed = 7;
    std::vector<std::size_t> n_inputs = {5, 10, 20, 30};
    std::vector<double> altitude_edges = {0, 100, 250, 500, 1000, 3000};
    std::size_t patches_per_slice = 4;
    std::size_t max_targets = 30;
    std::size_t patch_pixels = 256;
    std::size_t retry_cap = 100;
    double calm_threshold = 0.5;   // m/s; angles below it are undefined
    double baseline_exponent = 2.0;
    std::size_t histogram_n_input = 10;
    std::size_t threads = 0;       // 0: SPLIIF_THREADS, else hardware concurrency

    void validate() const {
        if (n_inputs.empty()) throw ConfigError("n_inputs must not be empty");
        for (std::size_t i = 0; i < n_inputs.size(); ++i) {
            if (n_inputs[i] < 1) throw ConfigError("n_inputs entries must be >= 1");
            if (i && n_inputs[i] <= n_inputs[i - 1]) throw ConfigError("n_inputs must be strictly increasing");
        }
        if (altitude_edges.size() < 2) throw ConfigError("altitude_edges needs at least two entries");
        for (std::size_t i = 1; i < altitude_edges.size(); ++i)
            if (!(altitude_edges[i] > altitude_edges[i - 1])) throw ConfigError("altitude_edges must increase");
        if (patches_per_slice < 1) throw ConfigError("patches_per_slice must be >= 1");
        if (max_targets < 1) throw ConfigError("max_targets must be >= 1");
        if (patch_pixels < 2) throw ConfigError("patch_pixels must be >= 2");
        if (retry_cap < 1) throw ConfigError("retry_cap must be >= 1");
        if (!(calm_threshold >= 0.0)) throw ConfigError("calm_threshold must be >= 0");
        if (!(baseline_exponent > 0.0)) throw ConfigError("baseline_exponent must be positive");
    }
};

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SPLIIF_THREADS")) {
        const auto v = parse_number(env);
        if (!v || *v < 1 || *v != std::floor(*v)) throw ConfigError("SPLIIF_THREADS must be a positive integer");
        return static_cast<std::size_t>(*v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// A square world tile handed to predictors.
struct EvalPatch {
    const Dataset* data = nullptr;
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t pixels = 0;
    std::string time_id;
};

/// Temperature (C) and wind components (m/s).
struct PhysicalPrediction {
    double temperature = 0.0;
    double u = 0.0;
    double v = 0.0;
};

using Predictor = std::function<std::vector<PhysicalPrediction>(
    const EvalPatch&, const std::vector<StationObservation>& inputs, const std::vector<LonLat>& queries)>;

inline Predictor model_predictor(const SpliifConfig& cfg, const SpliifParams<float>& params) {
    require_station_model(cfg);
    return [cfg, &params](const EvalPatch& p, const std::vector<StationObservation>& inputs,
                          const std::vector<LonLat>& queries) {
        const PatchGeometry geom =
            make_patch_geometry(p.data->world, p.data->topography, p.row, p.col, p.pixels, cfg);
        const Tensor<float> y = predict(cfg, params, patch_inputs<float>(geom, inputs, queries));
        std::vector<PhysicalPrediction> out;
        for (std::size_t n = 0; n < queries.size(); ++n) {
            out.push_back({denormalize(Variable::temperature, y.at(n, 0)),
                           denormalize(Variable::wind_component, y.at(n, 1)),
                           denormalize(Variable::wind_component, y.at(n, 2))});
        }
        return out;
    };
}

/// Fixed-exponent IDW over all input stations, interpolating T, u and v.
inline Predictor idw_baseline(double exponent = 2.0) {
    return [exponent](const EvalPatch&, const std::vector<StationObservation>& inputs,
                      const std::vector<LonLat>& queries) {
        std::vector<PointSample> samples;
        for (const auto& s : inputs) {
            const auto phys = s.physical_channels();
            const auto valid = s.channel_valid();
            samples.push_back({s.position(), {phys[0], phys[1], phys[2]}, {valid[0], valid[1], valid[2]}});
        }
        const auto raw = idw_predict_points(samples, queries, exponent);
        std::vector<PhysicalPrediction> out;
        for (const auto& r : raw) out.push_back({r[0], r[1], r[2]});
        return out;
    };
}

inline constexpr std::array<const char*, 3> kEvalVariables = {"temperature", "wind_speed", "wind_angle"};

/// Per-(variable, altitude bin, n_input) statistics, flattened.
struct StatsGrid {
    std::size_t bins = 0;
    std::size_t n_count = 0;
    std::vector<ErrorStats> model;
    std::vector<ErrorStats> baseline;

    StatsGrid() = default;
    StatsGrid(std::size_t b, std::size_t n)
        : bins(b), n_count(n), model(kEvalVariables.size() * b * n), baseline(kEvalVariables.size() * b * n) {}

    std::size_t index(std::size_t var, std::size_t bin, std::size_t ni) const { return (var * bins + bin) * n_count + ni; }

    void merge(const StatsGrid& o) {
        for (std::size_t k = 0; k < model.size(); ++k) {
            model[k].merge(o.model[k]);
            baseline[k].merge(o.baseline[k]);
        }
    }
};

struct MetricsRow {
    std::string variable;
    double alt_lo = 0.0;
    double alt_hi = 0.0;
    std::size_t n_input = 0;
    ErrorStats model;
    ErrorStats baseline;
};

/// Improvement across time slices: mean, sample standard deviation and standard error.
struct ImprovementRow {
    std::string variable;
    bool all_bins = false;
    double alt_lo = 0.0;
    double alt_hi = 0.0;
    std::size_t n_input = 0;
    double mean = 0.0;
    double std_dev = 0.0;
    double std_error = 0.0;
    std::size_t slices = 0;
};

struct EvalResult {
    bool has_model = false;
    std::vector<MetricsRow> rows;          // populated bins only
    std::vector<ImprovementRow> summary;   // model runs only
    std::array<std::vector<double>, 3> model_abs_errors;     // at histogram_n_input
    std::array<std::vector<double>, 3> baseline_abs_errors;
    std::size_t slices = 0;
    std::size_t patches = 0;

    const ImprovementRow* find_summary(const std::string& variable, std::size_t n_input, bool all_bins,
                                       double alt_lo = 0.0) const {
        for (const auto& r : summary)
            if (r.variable == variable && r.n_input == n_input && r.all_bins == all_bins &&
                (all_bins || r.alt_lo == alt_lo))
                return &r;
        return nullptr;
    }

    const MetricsRow* find_row(const std::string& variable, std::size_t n_input, double alt_lo) const {
        for (const auto& r : rows)
            if (r.variable == variable && r.n_input == n_input && r.alt_lo == alt_lo) return &r;
        return nullptr;
    }
};

namespace detail {

inline std::size_t altitude_bin(const std::vector<double>& edges, double alt) {
    if (alt < edges.front()) return 0;
    const auto it = std::upper_bound(edges.begin(), edges.end(), alt);
    const auto b = static_cast<std::size_t>(it - edges.begin());
    return std::min(b == 0 ? 0 : b - 1, edges.size() - 2);
}

struct SliceOutcome {
    StatsGrid grid;
    std::array<std::vector<double>, 3> model_abs;
    std::array<std::vector<double>, 3> baseline_abs;
    std::size_t patches = 0;
};

inline SliceOutcome evaluate_slice(const Dataset& ds, const DataSplit& split, const EvalProtocol& pr,
                                   std::size_t t, const Predictor* model, const Predictor& baseline) {
    const std::size_t bins = pr.altitude_edges.size() - 1;
    SliceOutcome out{StatsGrid(bins, pr.n_inputs.size()), {}, {}, 0};
    const GridSpec& world = ds.world;
    if (world.height < pr.patch_pixels || world.width < pr.patch_pixels) {
        throw SamplingError("world is smaller than one evaluation patch");
    }
    const auto& obs = ds.observations[t];
    for (std::size_t p = 0; p < pr.patches_per_slice; ++p) {
        Rng rng(derive_seed(derive_seed(pr.seed, 0xe7a1, t), p));
        std::vector<StationObservation> inputs, targets;
        EvalPatch patch{&ds, 0, 0, pr.patch_pixels, ds.times[t]};
        bool found = false;
        for (std::size_t attempt = 0; attempt < pr.retry_cap && !found; ++attempt) {
            patch.row = static_cast<std::size_t>(uniform_index(rng, world.height - pr.patch_pixels + 1));
            patch.col = static_cast<std::size_t>(uniform_index(rng, world.width - pr.patch_pixels + 1));
            const GridSpec footprint{world.lon_min + static_cast<double>(patch.col) * world.cell_size,
                                     world.lat_min + static_cast<double>(patch.row) * world.cell_size,
                                     world.cell_size, pr.patch_pixels, pr.patch_pixels};
            inputs.clear();
            targets.clear();
            for (const auto& o : stations_inside(obs, footprint)) {
                if (split.holdout_stations.count(o.station_id)) {
                    if (o.temperature_valid || o.wind_valid) targets.push_back(o);
                } else {
                    inputs.push_back(o);
                }
            }
            found = inputs.size() >= pr.n_inputs.front() && !targets.empty();
        }
        if (!found) {
            throw SamplingError("time " + ds.times[t] + ": no evaluation patch with " +
                                std::to_string(pr.n_inputs.front()) + " inputs and a held-out target after " +
                                std::to_string(pr.retry_cap) + " attempts");
        }
        shuffle(inputs, rng);
        shuffle(targets, rng);
        if (targets.size() > pr.max_targets) targets.resize(pr.max_targets);
        const std::vector<LonLat> queries = positions_of(targets);
        ++out.patches;

        for (std::size_t ni = 0; ni < pr.n_inputs.size(); ++ni) {
            const std::size_t n = pr.n_inputs[ni];
            if (inputs.size() < n) continue;
            const std::vector<StationObservation> subset(inputs.begin(), inputs.begin() + static_cast<std::ptrdiff_t>(n));
            const auto base = baseline(patch, subset, queries);
            const auto mod = model ? (*model)(patch, subset, queries) : base;
            if (base.size() != queries.size() || mod.size() != queries.size()) {
                throw ContractError("predictor returned the wrong number of rows");
            }
            const bool histogram = n == pr.histogram_n_input;
            for (std::size_t j = 0; j < targets.size(); ++j) {
                const auto& tg = targets[j];
                const std::size_t bin = altitude_bin(pr.altitude_edges, tg.altitude);
                auto record = [&](std::size_t var, double em, double eb) {
                    const std::size_t k = out.grid.index(var, bin, ni);
                    out.grid.model[k].add(em);
                    out.grid.baseline[k].add(eb);
                    if (histogram) {
                        out.model_abs[var].push_back(std::abs(em));
                        out.baseline_abs[var].push_back(std::abs(eb));
                    }
                };
                if (tg.temperature_valid && std::isfinite(base[j].temperature)) {
                    record(0, mod[j].temperature - tg.temperature, base[j].temperature - tg.temperature);
                }
                if (tg.wind_valid && std::isfinite(base[j].u) && std::isfinite(base[j].v)) {
                    const WindPolar wm = uv_to_wind(mod[j].u, mod[j].v);
                    const WindPolar wb = uv_to_wind(base[j].u, base[j].v);
                    record(1, wm.speed - tg.wind_speed, wb.speed - tg.wind_speed);
                    if (tg.wind_speed >= pr.calm_threshold && wm.speed >= pr.calm_threshold &&
                        wb.speed >= pr.calm_threshold) {
                        record(2, angular_error(wm.dir, tg.wind_dir), angular_error(wb.dir, tg.wind_dir));
                    }
                }
            }
        }
    }
    return out;
}

inline void summarize(ImprovementRow& row, const std::vector<double>& values) {
    row.slices = values.size();
    if (values.empty()) return;
    double s = 0.0;
    for (const double v : values) s += v;
    row.mean = s / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - row.mean) * (v - row.mean);
        row.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        row.std_error = row.std_dev / std::sqrt(static_cast<double>(values.size()));
    }
}

} // namespace detail

/// Runs model and baseline on identical inputs and held-out targets over every
/// evaluation time slice. Slices run on worker threads; their statistics are
/// merged in slice order so the result does not depend on the thread count.
/// With `model` null only the baseline is scored.
inline EvalResult evaluate(const Dataset& ds, const DataSplit& split, const EvalProtocol& protocol,
                           const Predictor* model, const Predictor& baseline) {
    protocol.validate();
    if (split.eval_times.empty()) throw ConfigError("no evaluation time slices");
    const auto& slices = split.eval_times;
    std::vector<detail::SliceOutcome> outcomes(slices.size());
    std::vector<std::exception_ptr> errors(slices.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < slices.size(); i = next++) {
            try {
                outcomes[i] = detail::evaluate_slice(ds, split, protocol, slices[i], model, baseline);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(resolve_threads(protocol.threads), slices.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const std::size_t bins = protocol.altitude_edges.size() - 1;
    const std::size_t nn = protocol.n_inputs.size();
    EvalResult result;
    result.has_model = model != nullptr;
    result.slices = slices.size();
    StatsGrid total(bins, nn);
    for (const auto& o : outcomes) {
        total.merge(o.grid);
        result.patches += o.patches;
        for (std::size_t v = 0; v < kEvalVariables.size(); ++v) {
            result.model_abs_errors[v].insert(result.model_abs_errors[v].end(), o.model_abs[v].begin(),
                                              o.model_abs[v].end());
            result.baseline_abs_errors[v].insert(result.baseline_abs_errors[v].end(), o.baseline_abs[v].begin(),
                                                 o.baseline_abs[v].end());
        }
    }
    for (std::size_t v = 0; v < kEvalVariables.size(); ++v)
        for (std::size_t b = 0; b < bins; ++b)
            for (std::size_t ni = 0; ni < nn; ++ni) {
                const std::size_t k = total.index(v, b, ni);
                if (total.baseline[k].count == 0) continue;
                result.rows.push_back({kEvalVariables[v], protocol.altitude_edges[b], protocol.altitude_edges[b + 1],
                                       protocol.n_inputs[ni], total.model[k], total.baseline[k]});
            }
    if (!result.has_model) return result;

    for (std::size_t v = 0; v < kEvalVariables.size(); ++v)
        for (std::size_t ni = 0; ni < nn; ++ni)
            for (std::size_t b = 0; b <= bins; ++b) {  // b == bins: all altitudes together
                std::vector<double> per_slice;
                for (const auto& o : outcomes) {
                    ErrorStats m, base;
                    for (std::size_t bb = 0; bb < bins; ++bb) {
                        if (b != bins && bb != b) continue;
                        m.merge(o.grid.model[o.grid.index(v, bb, ni)]);
                        base.merge(o.grid.baseline[o.grid.index(v, bb, ni)]);
                    }
                    double pct = 0.0;
                    if (base.count && improvement_pct(m.rmse(), base.rmse(), pct)) per_slice.push_back(pct);
                }
                if (per_slice.empty()) continue;
                ImprovementRow row;
                row.variable = kEvalVariables[v];
                row.all_bins = b == bins;
                row.alt_lo = protocol.altitude_edges[b == bins ? 0 : b];
                row.alt_hi = protocol.altitude_edges[b == bins ? bins : b + 1];
                row.n_input = protocol.n_inputs[ni];
                detail::summarize(row, per_slice);
                result.summary.push_back(row);
            }
    return result;
}

/// variable,alt_lo,alt_hi,n_input,rmse,mae,count[,rmse_baseline,improvement_pct]
inline std::string format_metrics_csv(const EvalResult& r) {
    std::ostringstream os;
    os << "variable,alt_lo,alt_hi,n_input,rmse,mae,count";
    if (r.has_model) os << ",rmse_baseline,improvement_pct";
    os << '\n';
    for (const auto& row : r.rows) {
        const ErrorStats& s = r.has_model ? row.model : row.baseline;
        os << row.variable << ',' << format_number(row.alt_lo) << ',' << format_number(row.alt_hi) << ','
           << row.n_input << ',' << format_number(s.rmse()) << ',' << format_number(s.mae()) << ',' << s.count;
        if (r.has_model) {
            double pct = 0.0;
            const bool defined = improvement_pct(row.model.rmse(), row.baseline.rmse(), pct);
            os << ',' << format_number(row.baseline.rmse()) << ',' << (defined ? format_number(pct) : "");
        }
        os << '\n';
    }
    return os.str();
}

inline std::string format_improvement_csv(const EvalResult& r) {
    std::ostringstream os;
    os << "variable,scope,alt_lo,alt_hi,n_input,mean_improvement_pct,std_improvement_pct,std_error,slices\n";
    for (const auto& row : r.summary) {
        os << row.variable << ',' << (row.all_bins ? "all" : "bin") << ',' << format_number(row.alt_lo) << ','
           << format_number(row.alt_hi) << ',' << row.n_input << ',' << format_number(row.mean) << ','
           << format_number(row.std_dev) << ',' << format_number(row.std_error) << ',' << row.slices << '\n';
    }
    return os.str();
}

inline std::string format_error_histograms(const std::array<std::vector<double>, 3>& abs_errors) {
    std::vector<std::pair<std::string, std::vector<HistogramBin>>> tables;
    for (std::size_t v = 0; v < kEvalVariables.size(); ++v) {
        if (abs_errors[v].empty()) continue;
        tables.emplace_back(kEvalVariables[v], error_histogram(abs_errors[v], histogram_edges(kEvalVariables[v])));
    }
    return format_histogram_csv(tables);
}

/// metrics.csv, histogram.csv and, when a model was scored,
/// improvement_summary.csv and histogram_baseline.csv.
inline std::vector<std::filesystem::path> write_eval_outputs(const EvalResult& r, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    auto put = [&](const char* name, const std::string& text) {
        write_file_atomic(dir / name, text);
        written.push_back(dir / name);
    };
    put("metrics.csv", format_metrics_csv(r));
    put("histogram.csv", format_error_histograms(r.has_model ? r.model_abs_errors : r.baseline_abs_errors));
    if (r.has_model) {
        put("histogram_baseline.csv", format_error_histograms(r.baseline_abs_errors));
        put("improvement_summary.csv", format_improvement_csv(r));
    }
    return written;
}

} // namespace spliif

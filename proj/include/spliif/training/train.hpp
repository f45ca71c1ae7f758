#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spliif/data/dataset.hpp"
#include "spliif/data/station.hpp"
#include "spliif/error.hpp"
#include "spliif/io.hpp"
#include "spliif/model/checkpoint.hpp"
#include "spliif/model/spliif.hpp"
#include "spliif/numerics/adam.hpp"
#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/ops.hpp"
#include "spliif/numerics/random.hpp"

namespace spliif {

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 3000;
    std::size_t batch_patches = 10;
    AdamConfig adam;
    std::size_t checkpoint_every = 500;  // 0: only at the end
    std::size_t log_every = 10;
    bool fixed_patch = false;            // reuse one patch for every batch entry

    void validate() const {
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (batch_patches < 1) throw ConfigError("batch_patches must be >= 1");
        if (log_every < 1) throw ConfigError("log_every must be >= 1");
        if (!(adam.lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
        if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
        if (!(adam.eps > 0.0)) throw ConfigError("eps must be positive");
    }
};

/// Model inputs for a patch: input stations feed the encoder, target stations
/// become the query coordinates.
template <class T>
ForwardInputs<T> patch_inputs(const PatchGeometry& geom, const std::vector<StationObservation>& inputs,
                              const std::vector<LonLat>& queries) {
    ForwardInputs<T> in;
    for (const auto& s : inputs) in.stations.positions.push_back(s.position());
    auto [values, mask] = station_channels<T>(inputs);
    in.stations.values = std::move(values);
    in.stations.mask = std::move(mask);
    in.topo = geom.topo.template cast<T>();
    in.grid_coarse = geom.grid_coarse;
    in.grid_fine = geom.grid_fine;
    in.queries = queries;
    return in;
}

inline std::vector<LonLat> positions_of(const std::vector<StationObservation>& stations) {
    std::vector<LonLat> out;
    for (const auto& s : stations) out.push_back(s.position());
    return out;
}

/// Station-only models: (temperature, u, v) in and out, topography as the sole dense prior.
inline void require_station_model(const SpliifConfig& model) {
    model.validate();
    if (model.c_sp != kStationChannels || model.c_out != kStationChannels) {
        throw ConfigError("c_sp and c_out must be 3 for station data (temperature, u, v)");
    }
    if (model.c_d != 0) throw ConfigError("c_d must be 0: station data carries no dense input");
}

/// Single-threaded optimisation loop. Step k draws its batch from
/// Rng(derive_seed(seed, k)), so a checkpoint's step counter is the whole RNG state.
class Trainer {
public:
    Trainer(SpliifConfig model, TrainConfig config, const Dataset& data, DataSplit split, PatchProtocol protocol)
        : model_(model), cfg_(config), data_(data), split_(std::move(split)), protocol_(protocol) {
        require_station_model(model_);
        cfg_.validate();
        protocol_.validate();
        if (split_.train_times.empty()) throw ConfigError("no training time slices");
        params_ = SpliifParams<float>::initialize(model_, cfg_.seed);
        adam_ = AdamState<float>(params_.tensors, cfg_.adam);
        if (cfg_.fixed_patch) {
            Rng rng(derive_seed(cfg_.seed, 0xf12e));
            fixed_ = draw_patch(rng);
        }
    }

    /// Continues from a checkpoint written by checkpoint().
    Trainer(const Checkpoint& resume, TrainConfig config, const Dataset& data, DataSplit split, PatchProtocol protocol)
        : Trainer(resume.config, config, data, std::move(split), protocol) {
        if (!resume.train) throw FormatError("checkpoint has no training state to resume from");
        if (resume.train->seed != cfg_.seed) {
            throw ConfigError("resume seed " + std::to_string(cfg_.seed) + " differs from checkpoint seed " +
                              std::to_string(resume.train->seed));
        }
        params_ = resume.params;
        step_ = resume.train->step;
        adam_ = resume.train->adam;
        adam_.config = cfg_.adam;
    }

    std::uint64_t step() const { return step_; }
    const SpliifConfig& model() const { return model_; }
    const TrainConfig& config() const { return cfg_; }
    const SpliifParams<float>& params() const { return params_; }

    /// One optimiser update; returns the batch loss (mean of per-patch masked L1).
    double train_step() {
        Rng rng(derive_seed(cfg_.seed, 0x7a11, step_));
        std::vector<Patch> batch;
        for (std::size_t b = 0; b < cfg_.batch_patches; ++b) batch.push_back(cfg_.fixed_patch ? *fixed_ : draw_patch(rng));

        std::vector<Tensor<float>> grads;
        for (const auto& t : params_.tensors) grads.emplace_back(t.shape());
        double loss = 0.0;
        const float weight = 1.0f / static_cast<float>(batch.size());
        for (const Patch& p : batch) {
            // One graph per patch keeps peak memory at a single patch's activations.
            try {
                Graph<float> g(true);
                const ModelVars mv = bind_params(g, model_, params_, true);
                const auto in = patch_inputs<float>(p.geometry, p.input_stations, positions_of(p.target_stations));
                const Var pred = forward(g, mv, model_, in);
                const auto [target, mask] = station_channels<float>(p.target_stations);
                const Var l = l1_loss(g, pred, target, mask);
                const double lv = static_cast<double>(g.value(l)[0]);
                if (!std::isfinite(lv)) throw NonFiniteError("loss is not finite");
                g.run_backward(scale(g, l, weight));
                for (std::size_t k = 0; k < mv.all.size(); ++k) {
                    if (!g.has_grad(mv.all[k])) continue;
                    const auto& gk = g.grad(mv.all[k]);
                    for (std::size_t i = 0; i < gk.size(); ++i) grads[k][i] += gk[i];
                }
                loss += lv;
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("step " + std::to_string(step_ + 1) + ", patch time " + p.time_id + ": " +
                                     e.what());
            }
        }
        for (const auto& gk : grads) {
            if (!gk.all_finite()) throw NonFiniteError("step " + std::to_string(step_ + 1) + ": non-finite gradient");
        }
        adam_step(params_.tensors, grads, adam_);
        ++step_;
        return loss / static_cast<double>(batch.size());
    }

    Checkpoint checkpoint() const { return Checkpoint{model_, params_, TrainState{cfg_.seed, step_, adam_}}; }

private:
    Patch draw_patch(Rng& rng) const {
        const std::size_t t = split_.train_times[uniform_index(rng, split_.train_times.size())];
        const auto stations = filter_stations(data_.observations[t], split_.holdout_stations, false);
        return sample_patch(stations, data_.world, data_.topography, rng, protocol_, model_, data_.times[t]);
    }

    SpliifConfig model_;
    TrainConfig cfg_;
    const Dataset& data_;
    DataSplit split_;
    PatchProtocol protocol_;
    SpliifParams<float> params_;
    AdamState<float> adam_;
    std::optional<Patch> fixed_;
    std::uint64_t step_ = 0;
};

struct LossPoint {
    std::uint64_t step = 0;
    double loss = 0.0;
};

/// Appends one "step,loss" line with a single write, creating the header first.
inline void append_loss_line(const std::filesystem::path& path, const LossPoint& p) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot open loss trace '" + path.string() + "'");
    const std::string line = (fresh ? std::string("step,loss\n") : std::string()) + std::to_string(p.step) + "," +
                             format_number(p.loss) + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw IoError("cannot write loss trace '" + path.string() + "'");
}

/// Drops trace lines logged after `step` (a crash between logging and checkpointing).
inline void truncate_loss_trace(const std::filesystem::path& path, std::uint64_t step) {
    if (!std::filesystem::exists(path)) return;
    std::istringstream in(read_file_text(path));
    std::string line, kept;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const auto s = parse_number(std::string_view(line).substr(0, comma));
        if (s && *s > static_cast<double>(step)) continue;
        kept += line + "\n";
    }
    write_file_atomic(path, kept);
}

struct TrainRunPaths {
    std::filesystem::path checkpoint;
    std::filesystem::path loss_trace;
};

/// Runs the trainer up to config().steps, logging and checkpointing on schedule.
/// Returns the points appended during this call.
inline std::vector<LossPoint> run_training(Trainer& trainer, const TrainRunPaths& paths, std::ostream* log = nullptr) {
    const TrainConfig& cfg = trainer.config();
    std::vector<LossPoint> trace;
    if (!paths.loss_trace.empty()) truncate_loss_trace(paths.loss_trace, trainer.step());
    while (trainer.step() < cfg.steps) {
        const double loss = trainer.train_step();
        const std::uint64_t s = trainer.step();
        if (s % cfg.log_every == 0 || s == cfg.steps) {
            trace.push_back({s, loss});
            if (!paths.loss_trace.empty()) append_loss_line(paths.loss_trace, trace.back());
            if (log) *log << "step " << s << " loss " << format_number(loss) << '\n';
        }
        const bool due = cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0;
        if (!paths.checkpoint.empty() && (due || s == cfg.steps)) save_checkpoint(trainer.checkpoint(), paths.checkpoint);
    }
    return trace;
}

} // namespace spliif

#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "spliif/data/dataset.hpp"
#include "spliif/data/synth_world.hpp"
#include "spliif/model/config.hpp"
#include "spliif/model/spliif.hpp"
#include "spliif/numerics/random.hpp"

namespace spliif::testing {

// 64x64-pixel world: one 64-pixel patch at half the model's fine resolution.
inline SynthWorldConfig small_world(std::uint64_t seed = 11) {
    SynthWorldConfig c;
    c.seed = seed;
    c.width = 64;
    c.height = 64;
    c.cell_size = 1.4 / 64.0;
    c.station_count = 150;
    c.time_count = 20;
    return c;
}

inline SpliifConfig tiny_model() {
    SpliifConfig c;
    c.c_l = 8;
    c.coarse_h = c.coarse_w = 8;
    c.fine_h = c.fine_w = 32;
    c.edsr_blocks = 1;
    c.edsr_width = 8;
    c.mlp_hidden = 16;
    c.mlp_depth = 2;
    c.idw_k = 8;
    return c;
}

inline PatchProtocol small_patch_protocol() {
    PatchProtocol p;
    p.patch_pixels = 64;
    return p;
}

// Random model inputs on a 0.05-degree fine grid anchored at the origin.
template <class T>
ForwardInputs<T> random_forward_inputs(const SpliifConfig& cfg, Rng& rng, std::size_t n_stations,
                                       std::size_t n_queries) {
    ForwardInputs<T> in;
    in.grid_fine = GridSpec{0.0, 0.0, 0.05, cfg.fine_w, cfg.fine_h};
    in.grid_coarse = in.grid_fine.resampled(cfg.coarse_h, cfg.coarse_w);
    const double lon_hi = in.grid_fine.lon_max(), lat_hi = in.grid_fine.lat_max();
    in.stations.values = Tensor<T>({n_stations, cfg.c_sp});
    for (std::size_t n = 0; n < n_stations; ++n) {
        in.stations.positions.push_back({uniform(rng, 0.0, lon_hi), uniform(rng, 0.0, lat_hi)});
        for (std::size_t c = 0; c < cfg.c_sp; ++c) in.stations.values.at(n, c) = static_cast<T>(uniform(rng, -1.0, 1.0));
    }
    if (cfg.c_d > 0) {
        Tensor<T> d({cfg.c_d, cfg.fine_h, cfg.fine_w});
        for (auto& v : d.data()) v = static_cast<T>(uniform(rng, -1.0, 1.0));
        in.dense = std::move(d);
    }
    in.topo = Tensor<T>({1, cfg.fine_h, cfg.fine_w});
    for (auto& v : in.topo.data()) v = static_cast<T>(uniform(rng, 0.0, 1.0));
    for (std::size_t q = 0; q < n_queries; ++q) in.queries.push_back({uniform(rng, 0.0, lon_hi), uniform(rng, 0.0, lat_hi)});
    return in;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("spliif_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace spliif::testing

#pragma once

#include <filesystem>
#include <string>

#include "fixtures.hpp"
#include "spliif/cli/run_config.hpp"
#include "spliif/io.hpp"

namespace spliif::testing {

// Run configuration for the small world and tiny model; a full
// synth/train/eval cycle with it finishes in seconds.
inline std::string write_small_config(const std::filesystem::path& dir, std::size_t steps = 6) {
    const auto w = small_world();
    const auto m = tiny_model();
    const cli::json doc = {
        {"data",
         {{"eval_time_fraction", 0.2},
          {"synth",
           {{"width", w.width},
            {"height", w.height},
            {"cell_size", w.cell_size},
            {"station_count", w.station_count},
            {"time_count", w.time_count}}}}},
        {"model",
         {{"c_l", m.c_l},
          {"coarse_h", m.coarse_h},
          {"coarse_w", m.coarse_w},
          {"fine_h", m.fine_h},
          {"fine_w", m.fine_w},
          {"edsr_blocks", m.edsr_blocks},
          {"edsr_width", m.edsr_width},
          {"mlp_hidden", m.mlp_hidden},
          {"mlp_depth", m.mlp_depth},
          {"idw_k", m.idw_k}}},
        {"train", {{"steps", steps}, {"batch_patches", 1}, {"log_every", 3}, {"patch_pixels", 64}}},
        {"eval", {{"patch_pixels", 64}, {"patches_per_slice", 1}, {"threads", 1}}},
    };
    const auto path = dir / "config.json";
    write_file_atomic(path, doc.dump(2));
    return path.string();
}

} // namespace spliif::testing

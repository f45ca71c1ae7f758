#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "spliif/cli/run_config.hpp"
#include "spliif/data/ascii_grid.hpp"
#include "spliif/data/dataset.hpp"
#include "spliif/data/station_csv.hpp"
#include "spliif/data/synth_world.hpp"
#include "spliif/error.hpp"
#include "spliif/eval/evaluate.hpp"
#include "spliif/eval/render.hpp"
#include "spliif/io.hpp"
#include "spliif/model/checkpoint.hpp"
#include "spliif/training/train.hpp"

namespace spliif::cli {

namespace fs = std::filesystem;

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// A usage or input problem detected before work starts (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// The flag registry: every accepted flag, its help text and the subcommands it applies to.
struct FlagSpec {
    std::string name;  // long form, with leading dashes
    std::string help;
    bool takes_value = true;
    std::vector<std::string> commands;
};

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = {"synth", "train", "eval", "infer"};
    return names;
}

inline const std::vector<FlagSpec>& flag_registry() {
    static const std::vector<FlagSpec> flags = {
        {"--config", "JSON run configuration (defaults apply when omitted)", true, {"synth", "train", "eval", "infer"}},
        {"--set", "override one config value, key.path=value (repeatable)", true, {"synth", "train", "eval", "infer"}},
        {"--out", "output directory", true, {"synth", "train", "eval", "infer"}},
        {"--force", "overwrite a non-empty output directory", false, {"synth", "train", "eval", "infer"}},
        {"--resume", "continue training from <out>/checkpoint.splf", false, {"train"}},
        {"--checkpoint", "model checkpoint file", true, {"eval", "infer"}},
        {"--baseline-only", "score only the IDW baseline; no checkpoint needed", false, {"eval"}},
        {"--stations", "station CSV providing the input observations", true, {"infer"}},
        {"--queries", "CSV with lon,lat columns to predict at", true, {"infer"}},
        {"--grid", "predict the full fine grid and write PGM maps", false, {"infer"}},
        {"--time", "observation time to use from --stations (default: earliest)", true, {"infer"}},
        {"--origin", "patch origin as world pixel row,col (default 0,0)", true, {"infer"}},
    };
    return flags;
}

struct Invocation {
    std::string command;
    std::optional<std::string> config;
    std::vector<std::string> sets;
    std::optional<std::string> out;
    bool force = false;
    bool resume = false;
    std::optional<std::string> checkpoint;
    bool baseline_only = false;
    std::optional<std::string> stations;
    std::optional<std::string> queries;
    bool grid = false;
    std::optional<std::string> time;
    std::optional<std::string> origin;
    std::vector<std::string> given;  // flags present on the command line
};

namespace detail {

inline RunConfig load_run_config(const Invocation& inv) {
    json doc = json::object();
    if (inv.config) {
        if (!fs::exists(*inv.config)) throw UsageError("config file '" + *inv.config + "' does not exist");
        doc = json::parse(read_file_text(*inv.config), nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config file '" + *inv.config + "' is not valid JSON");
    }
    for (const auto& s : inv.sets) apply_override(doc, s);
    return parse_run_config(doc);
}

inline void check_flags(const Invocation& inv) {
    for (const auto& name : inv.given) {
        for (const auto& f : flag_registry()) {
            if (f.name != name) continue;
            if (std::find(f.commands.begin(), f.commands.end(), inv.command) == f.commands.end()) {
                throw UsageError("flag " + name + " does not apply to '" + inv.command + "'");
            }
        }
    }
}

inline fs::path require_out(const Invocation& inv) {
    if (!inv.out) throw UsageError("--out is required for '" + inv.command + "'");
    return *inv.out;
}

inline bool non_empty_dir(const fs::path& p) { return fs::exists(p) && !fs::is_empty(p); }

inline void prepare_out(const fs::path& out, bool allowed_to_reuse) {
    if (fs::exists(out) && !fs::is_directory(out)) throw UsageError("output path '" + out.string() + "' is not a directory");
    if (non_empty_dir(out) && !allowed_to_reuse) {
        throw UsageError("output directory '" + out.string() + "' is not empty; pass --force to overwrite");
    }
}

inline void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

inline Dataset load_data(const RunConfig& c) {
    if (c.data.source == "synth") return SynthWorld(c.data.synth).to_dataset();
    return load_dataset(c.data.stations, c.data.topography);
}

inline void require_data_files(const RunConfig& c) {
    if (c.data.source != "files") return;
    require_file(c.data.stations, "data.stations file");
    require_file(c.data.topography, "data.topography file");
}

inline DataSplit split_of(const RunConfig& c, const Dataset& ds) {
    return make_split(ds, c.data.holdout_fraction, c.data.eval_time_fraction, c.data.split_seed);
}

inline void write_manifest(const fs::path& out, const std::string& command, const RunConfig& c,
                           const std::vector<fs::path>& outputs, json extra = json::object()) {
    json m = extra;
    m["command"] = command;
    m["config_hash"] = config_hash(c);
    m["config"] = to_json(c);
    m["seed"] = command == "synth" ? c.data.synth.seed : command == "eval" ? c.eval.seed : c.train.seed;
    json files = json::array();
    for (const auto& p : outputs) {
        const auto bytes = read_file_bytes(p);
        files.push_back({{"file", p.filename().string()},
                         {"fnv1a64", hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                                                    bytes.size())))}});
    }
    m["outputs"] = files;
    write_file_atomic(out / "manifest.json", m.dump(2) + "\n");
}

inline std::pair<std::size_t, std::size_t> parse_origin(const std::string& text) {
    const auto comma = text.find(',');
    const auto r = parse_number(std::string_view(text).substr(0, comma));
    const auto c = comma == std::string::npos ? std::nullopt : parse_number(std::string_view(text).substr(comma + 1));
    if (!r || !c || *r < 0 || *c < 0 || *r != std::floor(*r) || *c != std::floor(*c)) {
        throw UsageError("--origin expects row,col as non-negative integers, got '" + text + "'");
    }
    return {static_cast<std::size_t>(*r), static_cast<std::size_t>(*c)};
}

inline std::vector<LonLat> load_queries_csv(const fs::path& path) {
    std::istringstream in(read_file_text(path));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
    const auto header = spliif::detail::split_csv_line(line, 1);
    std::size_t lon_col = header.size(), lat_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == "lon") lon_col = i;
        if (trim(header[i]) == "lat") lat_col = i;
    }
    if (lon_col == header.size() || lat_col == header.size()) {
        throw FormatError(path.string() + ": missing required columns lon, lat");
    }
    std::vector<LonLat> out;
    for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
        if (trim(line).empty()) continue;
        const auto f = spliif::detail::split_csv_line(line, line_no);
        if (f.size() != header.size()) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        }
        const auto lon = parse_number(trim(f[lon_col]));
        const auto lat = parse_number(trim(f[lat_col]));
        if (!lon || !lat || !std::isfinite(*lon) || !std::isfinite(*lat)) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) + ": malformed coordinate");
        }
        out.push_back({*lon, *lat});
    }
    if (out.empty()) throw FormatError(path.string() + ": no query rows");
    return out;
}

} // namespace detail

inline int cmd_synth(const Invocation& inv, const RunConfig& c, std::ostream& log) {
    const fs::path out = detail::require_out(inv);
    detail::prepare_out(out, inv.force);
    const SynthWorld world(c.data.synth);
    fs::create_directories(out);
    std::vector<StationObservation> rows;
    for (std::size_t t = 0; t < world.time_count(); ++t) {
        auto slice = world.observe(t);
        rows.insert(rows.end(), slice.begin(), slice.end());
    }
    write_stations_csv(out / "stations.csv", rows);
    write_topography_asc(out / "topography.asc", world.grid(), world.topography());
    detail::write_manifest(out, "synth", c, {out / "stations.csv", out / "topography.asc"},
                           json{{"stations", world.station_ids().size()}, {"times", world.time_count()}});
    log << "synth: " << world.station_ids().size() << " stations x " << world.time_count() << " times -> "
        << out.string() << '\n';
    return kExitOk;
}

inline int cmd_train(const Invocation& inv, const RunConfig& c, std::ostream& log) {
    const fs::path out = detail::require_out(inv);
    const fs::path ck_path = out / "checkpoint.splf";
    if (inv.resume && inv.force) throw UsageError("--resume and --force are mutually exclusive");
    if (inv.resume && !fs::is_regular_file(ck_path)) {
        throw UsageError("--resume: no checkpoint at '" + ck_path.string() + "'");
    }
    detail::prepare_out(out, inv.force || inv.resume);
    detail::require_data_files(c);
    const Dataset ds = detail::load_data(c);
    DataSplit split = detail::split_of(c, ds);
    std::optional<Trainer> trainer;
    if (inv.resume) {
        trainer.emplace(load_checkpoint(ck_path, &c.model), c.train, ds, std::move(split), c.patch);
    } else {
        trainer.emplace(c.model, c.train, ds, std::move(split), c.patch);
        fs::create_directories(out);
        for (const char* name : {"checkpoint.splf", "loss.csv", "manifest.json"}) fs::remove(out / name);
    }
    log << "train: " << trainer->params().element_count() << " parameters, steps " << trainer->step() << " -> "
        << c.train.steps << '\n';
    run_training(*trainer, {ck_path, out / "loss.csv"}, &log);
    detail::write_manifest(out, "train", c, {ck_path, out / "loss.csv"});
    return kExitOk;
}

inline int cmd_eval(const Invocation& inv, const RunConfig& c, std::ostream& log) {
    const fs::path out = detail::require_out(inv);
    if (inv.baseline_only && inv.checkpoint) throw UsageError("--baseline-only takes no --checkpoint");
    if (!inv.baseline_only) {
        if (!inv.checkpoint) throw UsageError("--checkpoint is required unless --baseline-only is given");
        detail::require_file(*inv.checkpoint, "checkpoint");
    }
    detail::prepare_out(out, inv.force);
    detail::require_data_files(c);
    std::optional<Checkpoint> ck;
    if (!inv.baseline_only) ck = load_checkpoint(*inv.checkpoint, &c.model);
    const Dataset ds = detail::load_data(c);
    const DataSplit split = detail::split_of(c, ds);
    const Predictor baseline = idw_baseline(c.eval.baseline_exponent);
    std::optional<Predictor> model;
    if (ck) model = model_predictor(ck->config, ck->params);
    const EvalResult r = evaluate(ds, split, c.eval, model ? &*model : nullptr, baseline);
    fs::create_directories(out);
    const auto written = write_eval_outputs(r, out);
    detail::write_manifest(out, "eval", c, written, json{{"slices", r.slices}, {"patches", r.patches}});
    log << "eval: " << r.slices << " time slices, " << r.patches << " patches -> " << out.string() << '\n';
    return kExitOk;
}

inline int cmd_infer(const Invocation& inv, const RunConfig& c, std::ostream& log) {
    const fs::path out = detail::require_out(inv);
    if (!inv.checkpoint) throw UsageError("--checkpoint is required for 'infer'");
    if (!inv.stations) throw UsageError("--stations is required for 'infer'");
    if (inv.grid == inv.queries.has_value()) throw UsageError("give exactly one of --queries or --grid");
    detail::require_file(*inv.checkpoint, "checkpoint");
    detail::require_file(*inv.stations, "stations file");
    if (inv.queries) detail::require_file(*inv.queries, "queries file");
    detail::prepare_out(out, inv.force);
    detail::require_data_files(c);
    const auto [row, col] = inv.origin ? detail::parse_origin(*inv.origin) : std::pair<std::size_t, std::size_t>{0, 0};

    const Checkpoint ck = load_checkpoint(*inv.checkpoint, &c.model);
    GridSpec world;
    Tensor<float> topo;
    if (c.data.source == "synth") {
        const SynthWorld w(c.data.synth);
        world = w.grid();
        topo = w.topography();
    } else {
        AsciiGrid g = load_topography_asc(c.data.topography);
        world = g.grid;
        topo = std::move(g.values);
    }
    const PatchGeometry geom = make_patch_geometry(world, topo, row, col, c.patch.patch_pixels, ck.config);
    const GridSpec footprint{geom.grid_fine.lon_min, geom.grid_fine.lat_min, world.cell_size, c.patch.patch_pixels,
                             c.patch.patch_pixels};

    std::vector<StationObservation> all = load_stations_csv(*inv.stations);
    if (all.empty()) throw InputError("stations file has no rows");
    std::string time = inv.time.value_or("");
    if (time.empty()) {
        time = all.front().time;
        for (const auto& o : all) time = std::min(time, o.time);
    }
    std::vector<StationObservation> inputs;
    for (const auto& o : all) {
        if (o.time != time) continue;
        o.validate();
        if (footprint.contains(o.position())) inputs.push_back(o);
    }
    if (inputs.empty()) throw InputError("no station observations at time " + time + " inside the patch");

    std::vector<LonLat> queries;
    if (inv.queries) {
        queries = detail::load_queries_csv(*inv.queries);
        for (const auto& q : queries) {
            if (!footprint.contains(q)) {
                throw InputError("query (" + format_number(q.lon) + ", " + format_number(q.lat) +
                                 ") lies outside the patch");
            }
        }
    } else {
        for (std::size_t i = 0; i < geom.grid_fine.height; ++i)
            for (std::size_t j = 0; j < geom.grid_fine.width; ++j)
                queries.push_back({geom.grid_fine.lon_center(j), geom.grid_fine.lat_center(i)});
    }
    const Tensor<float> y = predict(ck.config, ck.params, patch_inputs<float>(geom, inputs, queries));

    fs::create_directories(out);
    std::vector<fs::path> written;
    if (inv.queries) {
        std::ostringstream os;
        os << "lon,lat,temp_c,u_ms,v_ms,wind_ms,wind_dir_deg,temp_norm,u_norm,v_norm\n";
        for (std::size_t n = 0; n < queries.size(); ++n) {
            const double t = denormalize(Variable::temperature, y.at(n, 0));
            const double u = denormalize(Variable::wind_component, y.at(n, 1));
            const double v = denormalize(Variable::wind_component, y.at(n, 2));
            const WindPolar w = uv_to_wind(u, v);
            os << format_number(queries[n].lon) << ',' << format_number(queries[n].lat) << ',' << format_number(t)
               << ',' << format_number(u) << ',' << format_number(v) << ',' << format_number(w.speed) << ','
               << format_number(w.dir) << ',' << format_number(y.at(n, 0)) << ',' << format_number(y.at(n, 1)) << ','
               << format_number(y.at(n, 2)) << '\n';
        }
        write_file_atomic(out / "predictions.csv", os.str());
        written.push_back(out / "predictions.csv");
    } else {
        const std::size_t H = geom.grid_fine.height, W = geom.grid_fine.width;
        Tensor<double> temp(Shape{1, H, W}), speed(Shape{1, H, W}), u(Shape{1, H, W}), v(Shape{1, H, W});
        for (std::size_t k = 0; k < H * W; ++k) {
            temp[k] = denormalize(Variable::temperature, y.at(k, 0));
            u[k] = denormalize(Variable::wind_component, y.at(k, 1));
            v[k] = denormalize(Variable::wind_component, y.at(k, 2));
            speed[k] = std::hypot(u[k], v[k]);
        }
        render_field_map(temp, -30.0, 40.0, out / "temperature.pgm");
        render_field_map(speed, 0.0, 30.0, out / "wind_speed.pgm");
        write_file_atomic(out / "wind_arrows.csv", format_arrows_csv(overlay_wind(u, v, 16)));
        written = {out / "temperature.pgm", out / "wind_speed.pgm", out / "wind_arrows.csv"};
    }
    detail::write_manifest(out, "infer", c, written, json{{"time", time}, {"inputs", inputs.size()}});
    log << "infer: " << inputs.size() << " input stations, " << queries.size() << " queries -> " << out.string()
        << '\n';
    return kExitOk;
}

/// Parses argv and runs one subcommand. Diagnostics go to `err`, help text to `out`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Station-to-grid weather downscaling: synthesize data, train, evaluate, infer."};
    app.name("spliif");
    app.require_subcommand(1, 1);
    Invocation inv;
    std::map<std::string, CLI::Option*> options;
    auto bind = [&](CLI::App& target) {
        for (const auto& f : flag_registry()) {
            const std::string desc = f.help + " [" + [&] {
                std::string s;
                for (const auto& c : f.commands) s += (s.empty() ? "" : ", ") + c;
                return s;
            }() + "]";
            CLI::Option* o = nullptr;
            if (f.name == "--config") o = target.add_option(f.name, inv.config, desc);
            else if (f.name == "--set") o = target.add_option(f.name, inv.sets, desc);
            else if (f.name == "--out") o = target.add_option(f.name, inv.out, desc);
            else if (f.name == "--force") o = target.add_flag(f.name, inv.force, desc);
            else if (f.name == "--resume") o = target.add_flag(f.name, inv.resume, desc);
            else if (f.name == "--checkpoint") o = target.add_option(f.name, inv.checkpoint, desc);
            else if (f.name == "--baseline-only") o = target.add_flag(f.name, inv.baseline_only, desc);
            else if (f.name == "--stations") o = target.add_option(f.name, inv.stations, desc);
            else if (f.name == "--queries") o = target.add_option(f.name, inv.queries, desc);
            else if (f.name == "--grid") o = target.add_flag(f.name, inv.grid, desc);
            else if (f.name == "--time") o = target.add_option(f.name, inv.time, desc);
            else if (f.name == "--origin") o = target.add_option(f.name, inv.origin, desc);
            else throw ContractError("flag " + f.name + " has no binding");
            options[f.name] = o;
        }
    };
    bind(app);
    for (const auto& name : subcommands()) {
        app.add_subcommand(name, "run the " + name + " workflow")->fallthrough();
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }
    inv.command = app.get_subcommands().front()->get_name();
    for (const auto& [name, o] : options)
        if (o->count() > 0) inv.given.push_back(name);

    try {
        detail::check_flags(inv);
        const RunConfig c = detail::load_run_config(inv);
        if (inv.command == "synth") return cmd_synth(inv, c, err);
        if (inv.command == "train") return cmd_train(inv, c, err);
        if (inv.command == "eval") return cmd_eval(inv, c, err);
        return cmd_infer(inv, c, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace spliif::cli

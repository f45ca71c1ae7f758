#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "spliif/data/dataset.hpp"
#include "spliif/data/synth_world.hpp"
#include "spliif/error.hpp"
#include "spliif/eval/evaluate.hpp"
#include "spliif/model/config.hpp"
#include "spliif/training/train.hpp"

namespace spliif::cli {

using json = nlohmann::json;

struct DataSection {
    std::string source = "synth";  // synth | files
    std::string stations;          // station CSV when source = files
    std::string topography;        // ESRI ASCII grid when source = files
    double holdout_fraction = 0.3;
    double eval_time_fraction = 0.1;
    std::uint64_t split_seed = 1;
    SynthWorldConfig synth;
};

/// Everything a run needs; each section has defaults.
struct RunConfig {
    DataSection data;
    SpliifConfig model;
    TrainConfig train;
    PatchProtocol patch;  // lives under "train" in the JSON document
    EvalProtocol eval;
};

namespace detail {

// Binds JSON keys of one object to struct fields, both directions.
class Section {
public:
    explicit Section(std::string path) : path_(std::move(path)) {}

    template <class T>
    Section& field(const char* key, T& ref) {
        const std::string where = path_ + "." + key;
        fields_.push_back({key, [&ref, where](const json& j) { read_value(j, ref, where); },
                           [&ref] { return json(ref); }});
        return *this;
    }

    Section& child(const char* key, Section sub) {
        auto shared = std::make_shared<Section>(std::move(sub));
        fields_.push_back({key, [shared](const json& j) { shared->read(j); }, [shared] { return shared->write(); }});
        return *this;
    }

    void read(const json& j) const {
        if (!j.is_object()) throw ConfigError("config key '" + path_ + "': expected an object");
        for (const auto& [key, value] : j.items()) {
            const Field* f = find(key);
            if (!f) throw ConfigError("unknown config key '" + path_ + "." + key + "'");
            f->read(value);
        }
    }

    json write() const {
        json j = json::object();
        for (const auto& f : fields_) j[f.key] = f.write();
        return j;
    }

private:
    struct Field {
        std::string key;
        std::function<void(const json&)> read;
        std::function<json()> write;
    };

    const Field* find(const std::string& key) const {
        for (const auto& f : fields_)
            if (f.key == key) return &f;
        return nullptr;
    }

    static void read_value(const json& j, std::string& out, const std::string& where) {
        if (!j.is_string()) throw ConfigError("config key '" + where + "': expected a string");
        out = j.get<std::string>();
    }

    static void read_value(const json& j, bool& out, const std::string& where) {
        if (!j.is_boolean()) throw ConfigError("config key '" + where + "': expected true or false");
        out = j.get<bool>();
    }

    static void read_value(const json& j, double& out, const std::string& where) {
        if (!j.is_number()) throw ConfigError("config key '" + where + "': expected a number");
        out = j.get<double>();
    }

    template <class U>
        requires std::is_unsigned_v<U>
    static void read_value(const json& j, U& out, const std::string& where) {
        if (j.is_number_unsigned()) {
            const auto v = j.get<std::uint64_t>();
            if (v > std::numeric_limits<U>::max()) throw ConfigError("config key '" + where + "': value too large");
            out = static_cast<U>(v);
            return;
        }
        if (j.is_number_integer()) throw ConfigError("config key '" + where + "': must be >= 0");
        throw ConfigError("config key '" + where + "': expected a non-negative integer");
    }

    template <class V>
    static void read_value(const json& j, std::vector<V>& out, const std::string& where) {
        if (!j.is_array()) throw ConfigError("config key '" + where + "': expected an array");
        std::vector<V> tmp(j.size());
        for (std::size_t i = 0; i < j.size(); ++i) read_value(j[i], tmp[i], where + "[" + std::to_string(i) + "]");
        out = std::move(tmp);
    }

    std::string path_;
    std::vector<Field> fields_;
};

// The key layout of the JSON document. Every field is listed once here and
// serves reading, writing and the unknown-key check.
inline std::vector<std::pair<std::string, Section>> sections(RunConfig& c) {
    auto& s = c.data.synth;
    Section synth("data.synth");
    synth.field("seed", s.seed).field("lon_min", s.lon_min).field("lat_min", s.lat_min)
        .field("cell_size", s.cell_size).field("width", s.width).field("height", s.height)
        .field("terrain_octaves", s.terrain_octaves).field("terrain_wavelength", s.terrain_wavelength)
        .field("terrain_persistence", s.terrain_persistence).field("terrain_gamma", s.terrain_gamma)
        .field("terrain_max", s.terrain_max).field("lapse_rate", s.lapse_rate)
        .field("base_temp_min", s.base_temp_min).field("base_temp_max", s.base_temp_max)
        .field("base_temp_amplitude", s.base_temp_amplitude).field("base_temp_wavelength", s.base_temp_wavelength)
        .field("wind_speed_min", s.wind_speed_min).field("wind_speed_max", s.wind_speed_max)
        .field("deflection_gain", s.deflection_gain).field("upslope_damping", s.upslope_damping)
        .field("altitude_speedup", s.altitude_speedup).field("station_count", s.station_count)
        .field("time_count", s.time_count).field("noise_temperature", s.noise_temperature)
        .field("noise_wind", s.noise_wind);
    Section data("data");
    data.field("source", c.data.source).field("stations", c.data.stations).field("topography", c.data.topography)
        .field("holdout_fraction", c.data.holdout_fraction).field("eval_time_fraction", c.data.eval_time_fraction)
        .field("split_seed", c.data.split_seed).child("synth", std::move(synth));

    auto& m = c.model;
    Section model("model");
    model.field("c_sp", m.c_sp).field("c_d", m.c_d).field("c_topo", m.c_topo).field("c_l", m.c_l)
        .field("c_out", m.c_out).field("coarse_h", m.coarse_h).field("coarse_w", m.coarse_w)
        .field("fine_h", m.fine_h).field("fine_w", m.fine_w).field("edsr_blocks", m.edsr_blocks)
        .field("edsr_width", m.edsr_width).field("mlp_hidden", m.mlp_hidden).field("mlp_depth", m.mlp_depth)
        .field("idw_k", m.idw_k).field("idw_epsilon", m.idw_epsilon);

    auto& t = c.train;
    Section train("train");
    train.field("seed", t.seed).field("steps", t.steps).field("batch_patches", t.batch_patches)
        .field("lr", t.adam.lr).field("beta1", t.adam.beta1).field("beta2", t.adam.beta2).field("eps", t.adam.eps)
        .field("checkpoint_every", t.checkpoint_every).field("log_every", t.log_every)
        .field("fixed_patch", t.fixed_patch).field("patch_pixels", c.patch.patch_pixels)
        .field("max_stations", c.patch.max_stations).field("input_fraction", c.patch.input_fraction)
        .field("min_stations", c.patch.min_stations).field("retry_cap", c.patch.retry_cap);

    auto& e = c.eval;
    Section eval("eval");
    eval.field("seed", e.seed).field("n_inputs", e.n_inputs).field("altitude_edges", e.altitude_edges)
        .field("patches_per_slice", e.patches_per_slice).field("max_targets", e.max_targets)
        .field("patch_pixels", e.patch_pixels).field("retry_cap", e.retry_cap)
        .field("calm_threshold", e.calm_threshold).field("baseline_exponent", e.baseline_exponent)
        .field("histogram_n_input", e.histogram_n_input).field("threads", e.threads);

    std::vector<std::pair<std::string, Section>> out;
    out.emplace_back("data", std::move(data));
    out.emplace_back("model", std::move(model));
    out.emplace_back("train", std::move(train));
    out.emplace_back("eval", std::move(eval));
    return out;
}

// Runs a validate() and prefixes its message with the key path it refers to.
template <class F>
void validate_under(const std::string& prefix, F&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        const std::string noise = "model config: ";
        if (msg.rfind(noise, 0) == 0) msg.erase(0, noise.size());
        throw ConfigError("config key '" + prefix + "." + msg.substr(0, msg.find(' ')) + "':" +
                          msg.substr(msg.find(' ') == std::string::npos ? msg.size() : msg.find(' ')));
    }
}

} // namespace detail

/// Cross-field and per-section checks; run before any work starts.
inline void validate(const RunConfig& c) {
    if (c.data.source != "synth" && c.data.source != "files") {
        throw ConfigError("config key 'data.source': expected \"synth\" or \"files\"");
    }
    if (c.data.source == "files") {
        if (c.data.stations.empty()) throw ConfigError("config key 'data.stations': required when data.source is \"files\"");
        if (c.data.topography.empty()) {
            throw ConfigError("config key 'data.topography': required when data.source is \"files\"");
        }
    }
    if (!(c.data.holdout_fraction > 0.0 && c.data.holdout_fraction < 1.0)) {
        throw ConfigError("config key 'data.holdout_fraction': must be in (0, 1)");
    }
    if (!(c.data.eval_time_fraction > 0.0 && c.data.eval_time_fraction < 1.0)) {
        throw ConfigError("config key 'data.eval_time_fraction': must be in (0, 1)");
    }
    detail::validate_under("data.synth", [&] { c.data.synth.validate(); });
    detail::validate_under("model", [&] { require_station_model(c.model); });
    detail::validate_under("train", [&] { c.train.validate(); });
    detail::validate_under("train", [&] { c.patch.validate(); });
    detail::validate_under("eval", [&] { c.eval.validate(); });
    if (c.patch.patch_pixels % c.model.fine_h != 0 || c.model.fine_h != c.model.fine_w) {
        throw ConfigError("config key 'train.patch_pixels': must be a multiple of the square model.fine_h");
    }
    if (c.eval.patch_pixels % c.model.fine_h != 0) {
        throw ConfigError("config key 'eval.patch_pixels': must be a multiple of model.fine_h");
    }
}

/// Sets `path` (dotted) to `value`, parsed as JSON when possible and as a plain string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("--set: malformed key path '" + path + "'");
        if (!node->is_object()) throw ConfigError("--set: '" + path + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

/// Reads a document over the defaults, rejecting unknown keys and type errors.
inline RunConfig parse_run_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    RunConfig c;
    auto secs = detail::sections(c);
    for (const auto& [key, value] : doc.items()) {
        auto it = std::find_if(secs.begin(), secs.end(), [&](const auto& s) { return s.first == key; });
        if (it == secs.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.read(value);
    }
    validate(c);
    return c;
}

/// Canonical document with every field spelled out (keys sorted).
inline json to_json(const RunConfig& config) {
    RunConfig c = config;
    json doc = json::object();
    for (const auto& [key, sec] : detail::sections(c)) doc[key] = sec.write();
    return doc;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

inline std::string config_hash(const RunConfig& c) { return "fnv1a64:" + hex64(fnv1a64(to_json(c).dump())); }

} // namespace spliif::cli

#pragma once

// Flat `key = value` run configuration. `#` starts a comment; blank lines are
// ignored; unknown keys and malformed values are usage errors. Every command
// reads the same key set, and the canonical dump of the effective values
// (every key, fixed order) is hashed into reports and manifests.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "grad/bench.hpp"
#include "grad/error.hpp"
#include "grad/fbp.hpp"
#include "grad/inference.hpp"
#include "grad/rng.hpp"
#include "grad/synth.hpp"
#include "grad/training.hpp"

namespace grad {

struct RunConfig {
    SynthBenchSpec synth{};
    ModelShape shape{};
    TrainConfig train{};
    InferenceConfig infer{};
    double bank_subsample = 0.1;
    BenchConfig bench{};

    /// Propagates the single master seed into every component.
    void set_seed(std::uint64_t seed) {
        synth.seed = seed;
        train.seed = seed;
        bench.seed = seed;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    N out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw Error(ErrorKind::usage, "config: bad value '" + v + "' for key '" + key + "'");
    return out;
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
    return out;
}

template <typename N>
std::vector<N> parse_list(const std::string& key, const std::string& v) {
    std::vector<N> out;
    for (const auto& item : split_list(v)) out.push_back(parse_number<N>(key, item));
    return out;
}

template <typename N>
std::string join(const std::vector<N>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct ConfigKey {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define GRAD_SIZE_KEY(name, field)                                                                      \
    ConfigKey{name, [](RunConfig& c, const std::string& v) { c.field = parse_number<std::size_t>(name, v); }, \
              [](const RunConfig& c) { return std::to_string(c.field); }}
#define GRAD_INT_KEY(name, field)                                                               \
    ConfigKey{name, [](RunConfig& c, const std::string& v) { c.field = parse_number<int>(name, v); }, \
              [](const RunConfig& c) { return std::to_string(c.field); }}
#define GRAD_REAL_KEY(name, field)                                                                 \
    ConfigKey{name, [](RunConfig& c, const std::string& v) { c.field = parse_number<double>(name, v); }, \
              [](const RunConfig& c) { return fmt_double(c.field); }}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        GRAD_SIZE_KEY("synth.classes", synth.classes),
        GRAD_SIZE_KEY("synth.train_per_class", synth.train_per_class),
        GRAD_SIZE_KEY("synth.test_normal", synth.test_normal),
        GRAD_SIZE_KEY("synth.test_anom", synth.test_anom),
        GRAD_SIZE_KEY("synth.height", synth.height),
        GRAD_SIZE_KEY("synth.width", synth.width),
        ConfigKey{"synth.kinds",
                  [](RunConfig& c, const std::string& v) {
                      c.synth.kinds.clear();
                      for (const auto& k : split_list(v))
                          if (!k.empty()) c.synth.kinds.push_back(parse_anomaly_kind(k));
                  },
                  [](const RunConfig& c) {
                      std::string s;
                      for (std::size_t i = 0; i < c.synth.kinds.size(); ++i) s += (i ? "," : "") + std::string(to_string(c.synth.kinds[i]));
                      return s;
                  }},
        GRAD_REAL_KEY("synth.area_min", synth.area_min),
        GRAD_REAL_KEY("synth.area_max", synth.area_max),
        GRAD_REAL_KEY("synth.noise_sigma", synth.noise_sigma),
        GRAD_SIZE_KEY("model.local_rows", shape.local_rows),
        GRAD_SIZE_KEY("model.local_cols", shape.local_cols),
        GRAD_SIZE_KEY("model.global_rows", shape.global_rows),
        GRAD_SIZE_KEY("model.global_cols", shape.global_cols),
        GRAD_SIZE_KEY("model.abnormal_rows", shape.abnormal_rows),
        GRAD_SIZE_KEY("model.abnormal_cols", shape.abnormal_cols),
        GRAD_REAL_KEY("train.lambda", train.lambda),
        GRAD_REAL_KEY("train.th", train.th),
        ConfigKey{"train.optimizer",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "sgd") c.train.optimizer = OptimizerKind::sgd;
                      else if (v == "adam") c.train.optimizer = OptimizerKind::adam;
                      else throw Error(ErrorKind::usage, "config: train.optimizer must be sgd or adam, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(c.train.optimizer == OptimizerKind::sgd ? "sgd" : "adam"); }},
        GRAD_REAL_KEY("train.lr_grid", train.lr_grid),
        GRAD_REAL_KEY("train.lr_map", train.lr_map),
        GRAD_REAL_KEY("train.momentum", train.momentum),
        GRAD_REAL_KEY("train.adam_beta2", train.adam_beta2),
        GRAD_INT_KEY("train.epochs_abnormal", train.epochs_stage1),
        GRAD_INT_KEY("train.epochs_normal", train.epochs_stage2),
        GRAD_SIZE_KEY("train.batch", train.batch),
        ConfigKey{"train.grid_init",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "zeros") c.train.grid_init.kind = GridInitKind::zeros;
                      else if (v == "uniform") c.train.grid_init.kind = GridInitKind::uniform;
                      else throw Error(ErrorKind::usage, "config: train.grid_init must be zeros or uniform, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(c.train.grid_init.kind == GridInitKind::zeros ? "zeros" : "uniform"); }},
        GRAD_REAL_KEY("train.grid_init_amplitude", train.grid_init.amplitude),
        GRAD_REAL_KEY("train.map_init", train.map_init),
        GRAD_REAL_KEY("fbp.p_anom", train.fbp.p_anom),
        GRAD_INT_KEY("fbp.block_min", train.fbp.block_min),
        GRAD_INT_KEY("fbp.block_max", train.fbp.block_max),
        GRAD_REAL_KEY("fbp.intensity_min", train.fbp.intensity_min),
        GRAD_REAL_KEY("fbp.intensity_max", train.fbp.intensity_max),
        GRAD_REAL_KEY("fbp.blur_sigma", train.fbp.blur_sigma),
        GRAD_INT_KEY("fbp.blur_radius", train.fbp.blur_radius),
        GRAD_REAL_KEY("fbp.mask_eps_frac", train.fbp.mask_eps_frac),
        ConfigKey{"fbp.mode",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "fbp") c.train.fbp.mode = SynthesisMode::fbp;
                      else if (v == "gaussian-noise") c.train.fbp.mode = SynthesisMode::gaussian_noise;
                      else throw Error(ErrorKind::usage, "config: fbp.mode must be fbp or gaussian-noise, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(c.train.fbp.mode == SynthesisMode::fbp ? "fbp" : "gaussian-noise"); }},
        GRAD_REAL_KEY("infer.gamma", infer.gamma),
        ConfigKey{"infer.image_reduction",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "smoothed-max") c.infer.image.reduction = ImageReduction::smoothed_max;
                      else if (v == "topk-mean") c.infer.image.reduction = ImageReduction::topk_mean;
                      else throw Error(ErrorKind::usage, "config: infer.image_reduction must be smoothed-max or topk-mean, got '" + v + "'");
                  },
                  [](const RunConfig& c) {
                      return std::string(c.infer.image.reduction == ImageReduction::smoothed_max ? "smoothed-max" : "topk-mean");
                  }},
        GRAD_SIZE_KEY("infer.topk", infer.image.topk),
        GRAD_REAL_KEY("bank.subsample", bank_subsample),
        ConfigKey{"bench.grid_sides", [](RunConfig& c, const std::string& v) { c.bench.grid_sides = parse_list<std::size_t>("bench.grid_sides", v); },
                  [](const RunConfig& c) { return join(c.bench.grid_sides); }},
        ConfigKey{"bench.bank_sizes", [](RunConfig& c, const std::string& v) { c.bench.bank_sizes = parse_list<std::size_t>("bench.bank_sizes", v); },
                  [](const RunConfig& c) { return join(c.bench.bank_sizes); }},
        GRAD_SIZE_KEY("bench.trials", bench.trials),
        GRAD_SIZE_KEY("bench.channels", bench.channels),
        GRAD_SIZE_KEY("bench.grid_queries", bench.grid_queries),
        GRAD_SIZE_KEY("bench.bank_queries", bench.bank_queries),
    };
    return keys;
}

#undef GRAD_SIZE_KEY
#undef GRAD_INT_KEY
#undef GRAD_REAL_KEY

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (key == k.name) {
            k.set(cfg, value);
            return;
        }
    throw Error(ErrorKind::usage, "config: unknown key '" + key + "'");
}

/// Applies `key = value` lines on top of `cfg`. `source` names the input in diagnostics.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::usage, source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
        } catch (const Error& e) {
            throw Error(e.kind(), source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::usage, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline RunConfig load_config(const std::filesystem::path& path) {
    RunConfig cfg;
    apply_config_text(cfg, read_text_file(path), path.string());
    return cfg;
}

/// Every key with its effective value, one `key = value` line each, fixed order.
inline std::string canonical_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
    return out;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical effective config. The seed is reported separately.
inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(canonical_config(cfg))); }

}  // namespace grad

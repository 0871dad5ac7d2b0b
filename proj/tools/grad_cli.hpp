#pragma once

// Command-line front end. `run` is callable in-process so tests can drive the
// same code path as the executable.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grad/bank.hpp"
#include "grad/bench.hpp"
#include "grad/checkpoint.hpp"
#include "grad/config.hpp"
#include "grad/evaluate.hpp"
#include "grad/fbp.hpp"
#include "grad/inference.hpp"
#include "grad/io.hpp"
#include "grad/pipeline.hpp"
#include "grad/synth.hpp"
#include "grad/training.hpp"

namespace grad::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

inline int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return ExitCode::usage;
        case ErrorKind::data: return ExitCode::data;
        case ErrorKind::numeric: return ExitCode::numeric;
    }
    return ExitCode::data;
}

struct Globals {
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
};

/// Effective configuration: defaults, then the --config file, then the seed.
inline RunConfig effective_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
    cfg.set_seed(g.seed);
    return cfg;
}

inline std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline fs::path require_out(const Globals& g) {
    require_usage(!g.out.empty(), "--out is required");
    ensure_dir(g.out);
    return g.out;
}

/// One manifest per artifact-producing command, written last.
inline void write_manifest(const fs::path& dir, const std::string& command, const Globals& g, const RunConfig& cfg,
                           const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    nlohmann::json j{{"command", command},
                     {"tool_version", kToolVersion},
                     {"config_path", g.config},
                     {"config_hash", config_hash(cfg)},
                     {"seed", g.seed},
                     {"inputs", inputs},
                     {"outputs", outputs},
                     {"timestamp", utc_timestamp()}};
    write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------

inline int cmd_gen_data(const Globals& g, std::ostream& out) {
    const auto cfg = effective_config(g);
    const auto dir = require_out(g);
    const auto ds = gen_synth_bench(cfg.synth);
    auto files = write_dataset(dir, ds);
    write_manifest(dir, "gen-data", g, cfg, {}, files);
    out << "wrote " << ds.train.n() << " train and " << ds.test.n() << " test images to " << dir.string() << "\n";
    return ExitCode::ok;
}

struct TrainArgs {
    std::string data;
    std::string stage = "both";
};

inline int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
    const auto cfg = effective_config(g);
    cfg.train.validate();
    require_usage(a.stage == "both" || a.stage == "normal" || a.stage == "abnormal", "--stage must be normal, abnormal or both");
    const auto dir = require_out(g);
    const auto train = load_aligned(a.data, Split::train, extractor_seed(g.seed));

    ModelShape shape = cfg.shape;
    shape.channels = train.features.c();
    auto model = init_model<float>(shape, cfg.train, train.extractor);
    // An untrained abnormal grid contributes nothing to the fused reconstruction.
    if (a.stage == "normal") std::fill(model.abnormal.grid.values().begin(), model.abnormal.grid.values().end(), 0.0f);

    std::ostringstream loss;
    loss << "stage,epoch,loss\n";
    auto trace = [&](const char* stage, const TrainReport& r) {
        loss << stage << ",0," << fmt17(r.initial_loss) << "\n";
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) loss << stage << ',' << e + 1 << ',' << fmt17(r.epoch_loss[e]) << "\n";
        for (double v : r.epoch_loss) require_numeric(std::isfinite(v), std::string(stage) + " training diverged");
    };
    if (a.stage != "normal") trace("abnormal", train_stage1_abnormal(model, train.features, cfg.train));
    if (a.stage != "abnormal") trace("normal", train_stage2_normal(model, train.features, cfg.train));

    save_checkpoint(model, dir / "model.gradckpt");
    write_text_file(dir / "loss.csv", loss.str());
    write_manifest(dir, "train", g, cfg, {a.data}, {"model.gradckpt", "loss.csv"});
    out << "trained on " << train.features.n() << " samples (" << to_string(train.features.dims()) << "), stage " << a.stage
        << "\n";
    return ExitCode::ok;
}

struct InferArgs {
    std::string ckpt;
    std::string data;
    std::string split = "test";
    bool bank = false;
    bool heatmaps = false;
};

/// Scores from a checkpoint, or from a memory bank built on the train split.
inline ScoreMap compute_scores(const RunConfig& cfg, const Globals& g, const std::string& ckpt, const std::string& data,
                               Split split, bool bank) {
    if (bank) {
        const auto train = load_aligned(data, Split::train, extractor_seed(g.seed));
        const auto query = load_aligned(data, split, extractor_seed(g.seed));
        const auto mb = bank_build(train.features, cfg.bank_subsample, g.seed);
        return make_score_map(bank_score(mb, query.features), query.image_h, query.image_w, cfg.infer.image);
    }
    require_usage(!ckpt.empty(), "a checkpoint (--ckpt) or --bank is required");
    const auto model = load_checkpoint(ckpt);
    if (model.extractor.kind == ExtractorDescriptor::Kind::external)
        require_data(has_external_layers(data), "checkpoint was trained on external layers but " + data + " has none");
    else
        require_data(!has_external_layers(data), "checkpoint was trained on stub features but " + data + " holds external layers");
    const auto query = load_aligned(data, split, model.extractor.seed);
    return score(model, query.features, query.image_h, query.image_w, cfg.infer);
}

inline void write_pgm(const fs::path& path, const FeatureMap& pixel, std::size_t n, double lo, double hi) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::usage, "cannot write " + path.string());
    f << "P5\n" << pixel.w() << ' ' << pixel.h() << "\n255\n";
    const double span = hi - lo;
    for (std::size_t y = 0; y < pixel.h(); ++y)
        for (std::size_t x = 0; x < pixel.w(); ++x) {
            const double v = span > 0.0 ? (static_cast<double>(pixel(n, 0, y, x)) - lo) / span : 0.0;
            f.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
        }
}

inline int cmd_infer(const Globals& g, const InferArgs& a, std::ostream& out) {
    const auto cfg = effective_config(g);
    require_usage(a.split == "test" || a.split == "train", "--split must be test or train");
    const auto dir = require_out(g);
    const auto s = compute_scores(cfg, g, a.ckpt, a.data, a.split == "test" ? Split::test : Split::train, a.bank);

    std::vector<std::string> outputs{"scores.gradfeat", "image_scores.csv"};
    write_featfile(s.pixel, dir / "scores.gradfeat");
    std::ostringstream csv;
    csv << "index,score\n";
    for (std::size_t i = 0; i < s.image.size(); ++i) csv << i << ',' << fmt17(s.image[i]) << "\n";
    write_text_file(dir / "image_scores.csv", csv.str());

    if (a.heatmaps) {
        ensure_dir(dir / "heatmaps");
        std::ostringstream norm;
        norm << "index,min,max\n";
        const std::size_t plane = s.pixel.plane();
        for (std::size_t n = 0; n < s.pixel.n(); ++n) {
            const auto first = s.pixel.data().begin() + static_cast<std::ptrdiff_t>(n * plane);
            const auto [lo, hi] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(plane));
            const auto rel = "heatmaps/" + image_file_name(n, "pgm");
            write_pgm(dir / rel, s.pixel, n, *lo, *hi);
            outputs.push_back(rel);
            norm << n << ',' << fmt17(*lo) << ',' << fmt17(*hi) << "\n";
        }
        write_text_file(dir / "heatmaps/normalization.csv", norm.str());
        outputs.push_back("heatmaps/normalization.csv");
    }
    std::vector<std::string> inputs{a.data};
    if (!a.bank) inputs.push_back(a.ckpt);
    write_manifest(dir, "infer", g, cfg, inputs, outputs);
    out << "scored " << s.image.size() << " images at " << s.target_h << "x" << s.target_w << "\n";
    return ExitCode::ok;
}

inline std::vector<double> read_image_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::data, "missing " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "index,score") throw Error(ErrorKind::data, path.string() + ": unexpected header");
    std::vector<double> out;
    for (std::size_t row = 0; std::getline(in, line); ++row) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.substr(0, comma) != std::to_string(row))
            throw Error(ErrorKind::data, path.string() + ": malformed row " + std::to_string(row + 2));
        char* end = nullptr;
        const std::string v = line.substr(comma + 1);
        const double d = std::strtod(v.c_str(), &end);
        if (end != v.c_str() + v.size()) throw Error(ErrorKind::data, path.string() + ": bad score '" + v + "'");
        out.push_back(d);
    }
    return out;
}

struct EvalArgs {
    std::string scores;
    std::string ckpt;
    std::string data;
    bool bank = false;
    bool pixel = false;
};

inline int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
    const auto cfg = effective_config(g);
    const int sources = int(!a.scores.empty()) + int(!a.ckpt.empty()) + int(a.bank);
    require_usage(sources == 1, "eval needs exactly one of --scores, --ckpt or --bank");
    const auto dir = require_out(g);
    const auto ann = read_annotations(a.data, a.pixel);

    MetricsRecord m;
    std::vector<std::string> inputs{a.data};
    if (!a.scores.empty()) {
        const auto image = read_image_scores(fs::path(a.scores) / "image_scores.csv");
        std::optional<FeatureMap> pixel;
        if (a.pixel) pixel = read_featfile(fs::path(a.scores) / "scores.gradfeat");
        m = evaluate(image, pixel ? &*pixel : nullptr, ann.labels, ann.masks ? &*ann.masks : nullptr);
        inputs.push_back(a.scores);
    } else {
        const auto s = compute_scores(cfg, g, a.ckpt, a.data, Split::test, a.bank);
        m = evaluate(s, ann.labels, ann.masks ? &*ann.masks : nullptr);
        if (!a.bank) inputs.push_back(a.ckpt);
    }
    m.seed = g.seed;
    m.config_hash = config_hash(cfg);
    write_text_file(dir / "metrics.json", to_json(m).dump(2) + "\n");
    write_text_file(dir / "metrics.csv", to_csv(m));
    write_manifest(dir, "eval", g, cfg, inputs, {"metrics.json", "metrics.csv"});
    out << to_json(m).dump() << "\n";
    return ExitCode::ok;
}

inline int cmd_bench(const Globals& g, std::ostream& out) {
    const auto cfg = effective_config(g);
    const auto dir = require_out(g);
    const auto rep = bench_query_scaling(cfg.bench);
    write_text_file(dir / "bench.json", to_json(rep).dump(2) + "\n");
    write_text_file(dir / "bench.csv", to_csv(rep));
    write_manifest(dir, "bench", g, cfg, {}, {"bench.json", "bench.csv"});
    out << "grid ratio " << rep.grid_ratio() << " (" << rep.grid.front().size << "^2 -> " << rep.grid.back().size
        << "^2 nodes), bank ratio " << rep.bank_ratio() << " (" << rep.bank.front().size << " -> " << rep.bank.back().size
        << " entries)\n";
    return ExitCode::ok;
}

struct PreviewArgs {
    std::size_t height = 16, width = 16;
    int block = 2;
    double intensity = 1.0;
    std::optional<std::size_t> center_y, center_x;
};

inline int cmd_fbp_preview(const Globals& g, const PreviewArgs& a, std::ostream& out) {
    const auto cfg = effective_config(g);
    require_usage(a.height >= 1 && a.width >= 1, "canvas size must be >= 1");
    const auto dir = require_out(g);
    FbpParams p;
    p.block = a.block;
    p.intensity = a.intensity;
    p.center = {a.center_y.value_or(a.height / 2), a.center_x.value_or(a.width / 2)};
    p.blur_sigma = cfg.train.fbp.blur_sigma;
    p.blur_radius = cfg.train.fbp.blur_radius;
    p.mask_eps_frac = cfg.train.fbp.mask_eps_frac;
    Rng rng(derive_seed(g.seed, "fbp-preview"));
    const auto r = fbp(FeatureMapD(1, 1, a.height, a.width), p, rng);
    write_featfile(r.blurred.cast<float>(), dir / "canvas.gradfeat");
    write_maskfile(r.mask, dir / "mask.gradmask");
    write_manifest(dir, "fbp-preview", g, cfg, {}, {"canvas.gradfeat", "mask.gradmask"});
    out << "walk marked " << r.shape.marked() << " cells, mask covers " << r.mask.count(0) << " of " << a.height * a.width
        << "\n";
    return ExitCode::ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Bi-grid feature reconstruction for anomaly detection"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "master seed for every random stream");
    app.add_option("--config", g.config, "key = value configuration file");
    app.add_option("--out", g.out, "output directory");

    auto* gen = app.add_subcommand("gen-data", "write the synthetic benchmark");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "two-stage training");
    train->add_option("--data", ta.data, "dataset directory")->required();
    train->add_option("--stage", ta.stage, "normal, abnormal or both");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "score a dataset split");
    infer->add_option("--ckpt", ia.ckpt, "checkpoint file");
    infer->add_option("--data", ia.data, "dataset directory")->required();
    infer->add_option("--split", ia.split, "test or train");
    infer->add_flag("--bank", ia.bank, "score with the memory-bank baseline instead of a checkpoint");
    infer->add_flag("--heatmaps", ia.heatmaps, "also write per-image PGM heatmaps");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "image and pixel metrics");
    eval->add_option("--scores", ea.scores, "directory written by infer");
    eval->add_option("--ckpt", ea.ckpt, "checkpoint to score with");
    eval->add_flag("--bank", ea.bank, "score with the memory-bank baseline");
    eval->add_option("--data", ea.data, "dataset directory")->required();
    eval->add_flag("--pixel", ea.pixel, "also compute pixel-level metrics (needs masks)");

    auto* bench = app.add_subcommand("bench", "grid vs memory-bank query latency scaling");

    PreviewArgs pa;
    std::size_t cy = 0, cx = 0;
    auto* preview = app.add_subcommand("fbp-preview", "write one blurred perturbation canvas and its mask");
    preview->add_option("--height", pa.height);
    preview->add_option("--width", pa.width);
    preview->add_option("--block", pa.block, "random-walk block size B");
    preview->add_option("--intensity", pa.intensity);
    auto* opt_cy = preview->add_option("--center-y", cy);
    auto* opt_cx = preview->add_option("--center-x", cx);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return ExitCode::ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return ExitCode::ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return ExitCode::usage;
    }
    if (opt_cy->count()) pa.center_y = cy;
    if (opt_cx->count()) pa.center_x = cx;

    try {
        if (gen->parsed()) return cmd_gen_data(g, out);
        if (train->parsed()) return cmd_train(g, ta, out);
        if (infer->parsed()) return cmd_infer(g, ia, out);
        if (eval->parsed()) return cmd_eval(g, ea, out);
        if (bench->parsed()) return cmd_bench(g, out);
        if (preview->parsed()) return cmd_fbp_preview(g, pa, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::data;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return ExitCode::numeric;
    }
    return ExitCode::usage;
}

}  // namespace grad::cli

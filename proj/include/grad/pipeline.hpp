#pragma once

// Dataset directory layout shared by gen-data, train, infer and eval:
//
//   train/img_NNNNN.gradfeat   one (1, 3, H, W) image per file
//   test/img_NNNNN.gradfeat
//   masks/img_NNNNN.gradmask   (1, H, W), one per test image (all zero for normals)
//   labels.csv                 index,label,class,kind over the test set
//
// A directory may instead carry precomputed backbone layers, one GRADFEAT per
// layer with N = image count, under train_layers/ and test_layers/ (files are
// taken in name order). Those are aligned directly; the stub extractor is skipped.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/features.hpp"
#include "grad/io.hpp"
#include "grad/synth.hpp"
#include "grad/training.hpp"

namespace grad {

namespace fs = std::filesystem;

inline std::string image_file_name(std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu.%s", i, ext);
    return buf;
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::usage, "cannot create directory " + dir.string());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::usage, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::usage, "write failed for " + path.string());
}

/// Writes the dataset; returns the list of files created, relative to `dir`.
inline std::vector<std::string> write_dataset(const fs::path& dir, const SynthDataset& ds) {
    std::vector<std::string> files;
    ensure_dir(dir / "train");
    ensure_dir(dir / "test");
    ensure_dir(dir / "masks");
    for (std::size_t i = 0; i < ds.train.n(); ++i) {
        const auto rel = "train/" + image_file_name(i, "gradfeat");
        write_featfile(ds.train.sample(i), dir / rel);
        files.push_back(rel);
    }
    std::ostringstream labels;
    labels << "index,label,class,kind\n";
    for (std::size_t i = 0; i < ds.test.n(); ++i) {
        const auto rel = "test/" + image_file_name(i, "gradfeat");
        write_featfile(ds.test.sample(i), dir / rel);
        files.push_back(rel);
        const auto mrel = "masks/" + image_file_name(i, "gradmask");
        write_maskfile(ds.test_masks.sample(i), dir / mrel);
        files.push_back(mrel);
        const int kind = ds.test_kind[i];
        labels << i << ',' << int(ds.test_labels[i]) << ',' << ds.test_class[i] << ','
               << (kind < 0 ? "normal" : to_string(static_cast<AnomalyKind>(kind))) << '\n';
    }
    write_text_file(dir / "labels.csv", labels.str());
    files.push_back("labels.csv");
    return files;
}

namespace detail {

inline std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline FeatureMap read_image_stack(const fs::path& dir) {
    const auto files = list_files(dir, ".gradfeat");
    if (files.empty()) throw Error(ErrorKind::data, "no .gradfeat images in " + dir.string());
    std::vector<FeatureMap> parts;
    for (const auto& f : files) parts.push_back(read_featfile(f));
    for (const auto& p : parts)
        require_data(p.c() == parts.front().c() && p.h() == parts.front().h() && p.w() == parts.front().w(),
                     "images in " + dir.string() + " have mismatched dims");
    return stack<float>(parts);
}

inline LayerSet read_layer_files(const fs::path& dir) {
    const auto files = list_files(dir, ".gradfeat");
    if (files.empty()) throw Error(ErrorKind::data, "no .gradfeat layers in " + dir.string());
    LayerSet set;
    for (std::size_t i = 0; i < files.size(); ++i) {
        set.layers.push_back(read_featfile(files[i]));
        set.level_ids.push_back(static_cast<int>(i));
        require_data(set.layers.back().n() == set.layers.front().n(),
                     files[i].string() + ": layer sample count differs from " + files.front().string());
    }
    return set;
}

}  // namespace detail

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

inline bool has_external_layers(const fs::path& dir) {
    return fs::is_directory(dir / "train_layers") || fs::is_directory(dir / "test_layers");
}

struct TestAnnotations {
    std::vector<std::uint8_t> labels;
    std::optional<AnomalyMask> masks;  // image resolution
};

/// Reads labels.csv (and masks/ when `want_masks`). Missing masks are a data error only when wanted.
inline TestAnnotations read_annotations(const fs::path& dir, bool want_masks) {
    TestAnnotations a;
    std::ifstream in(dir / "labels.csv");
    if (!in) throw Error(ErrorKind::data, "missing " + (dir / "labels.csv").string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("index,label", 0) != 0) throw Error(ErrorKind::data, "labels.csv: unexpected header");
    for (std::size_t row = 0; std::getline(in, line); ++row) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string idx, lab;
        std::getline(ls, idx, ',');
        std::getline(ls, lab, ',');
        if (idx != std::to_string(row) || (lab != "0" && lab != "1"))
            throw Error(ErrorKind::data, "labels.csv: malformed row " + std::to_string(row + 2));
        a.labels.push_back(lab == "1" ? 1 : 0);
    }
    if (a.labels.empty()) throw Error(ErrorKind::data, "labels.csv: no rows");
    if (want_masks) {
        const auto files = detail::list_files(dir / "masks", ".gradmask");
        if (files.empty()) throw Error(ErrorKind::data, "pixel metrics requested but " + (dir / "masks").string() + " has no masks");
        if (files.size() != a.labels.size())
            throw Error(ErrorKind::data, "found " + std::to_string(files.size()) + " masks for " +
                                             std::to_string(a.labels.size()) + " labelled test images");
        std::vector<AnomalyMask> parts;
        for (const auto& f : files) parts.push_back(read_maskfile(f));
        for (const auto& p : parts)
            require_data(p.h() == parts.front().h() && p.w() == parts.front().w(), "masks have mismatched dims");
        a.masks = stack_masks(parts);
    }
    return a;
}

/// Aligned features for one split plus the image resolution they score against.
struct AlignedSplit {
    FeatureMap features;
    std::size_t image_h = 0, image_w = 0;
    ExtractorDescriptor extractor;
};

inline std::uint64_t extractor_seed(std::uint64_t master) { return derive_seed(master, "extractor"); }

/// `ex_seed` seeds the stub extractor; training passes extractor_seed(--seed),
/// inference passes the seed recorded in the checkpoint.
inline AlignedSplit load_aligned(const fs::path& dir, Split split, std::uint64_t ex_seed, const ExtractorConfig& ex = {}) {
    AlignedSplit out;
    if (has_external_layers(dir)) {
        out.features = align_features(detail::read_layer_files(dir / (std::string(split_name(split)) + "_layers")));
        out.extractor = {ExtractorDescriptor::Kind::external, 0};
        out.image_h = out.features.h();
        out.image_w = out.features.w();
        // Masks, when present, define the evaluation resolution.
        const auto masks = detail::list_files(dir / "masks", ".gradmask");
        if (split == Split::test && !masks.empty()) {
            const auto m = read_maskfile(masks.front());
            out.image_h = m.h();
            out.image_w = m.w();
        }
    } else {
        const auto images = detail::read_image_stack(dir / split_name(split));
        out.features = align_features(stub_extract(images, ex, ex_seed));
        out.extractor = {ExtractorDescriptor::Kind::stub, ex_seed};
        out.image_h = images.h();
        out.image_w = images.w();
    }
    require_numeric(out.features.all_finite(), "non-finite aligned features");
    return out;
}

}  // namespace grad

#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/inference.hpp"
#include "grad/metrics.hpp"

namespace grad {

struct MetricsRecord {
    double image_auroc = 0.0;
    double image_aupr = 0.0;
    std::optional<double> pixel_auroc;  // absent when pixel metrics were not requested
    std::optional<double> pixel_aupr;
    std::size_t n_test = 0;
    std::uint64_t seed = 0;
    std::string config_hash;

    bool operator==(const MetricsRecord&) const = default;
};

/// Pools every pixel of every test image into one ranking problem.
inline LabeledScores pool_pixels(const FeatureMap& pixel, const AnomalyMask& masks) {
    require_usage(pixel.c() == 1, "pool_pixels: expects a single-channel score map");
    require_data(pixel.n() == masks.n() && pixel.h() == masks.h() && pixel.w() == masks.w(),
                 "pool_pixels: score map " + to_string(pixel.dims()) + " does not match masks (" + std::to_string(masks.n()) +
                     ", " + std::to_string(masks.h()) + ", " + std::to_string(masks.w()) + ")");
    LabeledScores ls;
    ls.scores.reserve(pixel.size());
    for (float v : pixel.data()) ls.scores.push_back(static_cast<double>(v));
    ls.labels.assign(masks.cells().begin(), masks.cells().end());
    return ls;
}

/// Image metrics always; pixel metrics when `masks` is given.
inline MetricsRecord evaluate(const std::vector<double>& image_scores, const FeatureMap* pixel,
                              const std::vector<std::uint8_t>& labels, const AnomalyMask* masks) {
    require_data(image_scores.size() == labels.size(), "evaluate: " + std::to_string(image_scores.size()) +
                                                           " image scores for " + std::to_string(labels.size()) + " labels");
    MetricsRecord r;
    r.n_test = labels.size();
    LabeledScores img{image_scores, labels};
    r.image_auroc = auroc(img);
    r.image_aupr = aupr(img);
    if (masks) {
        require_usage(pixel != nullptr, "evaluate: pixel metrics need a pixel score map");
        const auto px = pool_pixels(*pixel, *masks);
        r.pixel_auroc = auroc(px);
        r.pixel_aupr = aupr(px);
    }
    return r;
}

inline MetricsRecord evaluate(const ScoreMap& s, const std::vector<std::uint8_t>& labels, const AnomalyMask* masks) {
    return evaluate(s.image, &s.pixel, labels, masks);
}

inline nlohmann::json to_json(const MetricsRecord& r) {
    nlohmann::json j{{"image_auroc", r.image_auroc}, {"image_aupr", r.image_aupr}, {"n_test", r.n_test},
                     {"seed", r.seed}, {"config_hash", r.config_hash}};
    j["pixel_auroc"] = r.pixel_auroc ? nlohmann::json(*r.pixel_auroc) : nlohmann::json(nullptr);
    j["pixel_aupr"] = r.pixel_aupr ? nlohmann::json(*r.pixel_aupr) : nlohmann::json(nullptr);
    return j;
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
    try {
        MetricsRecord r;
        r.image_auroc = j.at("image_auroc").get<double>();
        r.image_aupr = j.at("image_aupr").get<double>();
        if (!j.at("pixel_auroc").is_null()) r.pixel_auroc = j.at("pixel_auroc").get<double>();
        if (!j.at("pixel_aupr").is_null()) r.pixel_aupr = j.at("pixel_aupr").get<double>();
        r.n_test = j.at("n_test").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::data, std::string("metrics report: ") + e.what());
    }
}

inline std::string to_csv(const MetricsRecord& r) {
    std::ostringstream os;
    os.precision(17);
    auto opt = [&](const std::optional<double>& v) {
        if (v) os << *v;
    };
    os << "image_auroc,image_aupr,pixel_auroc,pixel_aupr,n_test,seed,config_hash\n";
    os << r.image_auroc << ',' << r.image_aupr << ',';
    opt(r.pixel_auroc);
    os << ',';
    opt(r.pixel_aupr);
    os << ',' << r.n_test << ',' << r.seed << ',' << r.config_hash << '\n';
    return os.str();
}

}  // namespace grad

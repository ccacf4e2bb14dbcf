#ifndef EARBIO_CHAIN_HPP
#define EARBIO_CHAIN_HPP

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earbio/error.hpp"

namespace earbio {

enum class StepKind {
    Rotate,      // [angle_degrees]
    FlipH,       // []
    CropResize,  // [scale, offset_x, offset_y]  offsets are fractions of the slack W - w
    Affine,      // [a, b, d, e]  linear part applied about the image centre
    Perspective, // [dx0, dy0, dx1, dy1, dx2, dy2, dx3, dy3]  corner shifts as fractions of W, H
    Brightness,  // [factor]
    Contrast,    // [factor]
    Saturation,  // [factor]
    Hue,         // [shift]
    Grayscale3,  // []
};

inline constexpr std::size_t step_arity(StepKind k) noexcept {
    switch (k) {
        case StepKind::Rotate: return 1;
        case StepKind::FlipH: return 0;
        case StepKind::CropResize: return 3;
        case StepKind::Affine: return 4;
        case StepKind::Perspective: return 8;
        case StepKind::Brightness:
        case StepKind::Contrast:
        case StepKind::Saturation:
        case StepKind::Hue: return 1;
        case StepKind::Grayscale3: return 0;
    }
    return 0;
}

NLOHMANN_JSON_SERIALIZE_ENUM(StepKind, {
    {StepKind::Rotate, "Rotate"},
    {StepKind::FlipH, "FlipH"},
    {StepKind::CropResize, "CropResize"},
    {StepKind::Affine, "Affine"},
    {StepKind::Perspective, "Perspective"},
    {StepKind::Brightness, "Brightness"},
    {StepKind::Contrast, "Contrast"},
    {StepKind::Saturation, "Saturation"},
    {StepKind::Hue, "Hue"},
    {StepKind::Grayscale3, "Grayscale3"},
})

/// One fully resolved augmentation step. Parameters are relative to the
/// image size, so a step replays identically on any image of the same shape.
struct TransformStep {
    StepKind kind = StepKind::FlipH;
    std::vector<double> params;

    friend bool operator==(const TransformStep&, const TransformStep&) = default;
};

struct TransformChain {
    std::vector<TransformStep> steps;
    std::uint64_t seed = 0;
    std::string source_id;

    friend bool operator==(const TransformChain&, const TransformChain&) = default;
};

inline void to_json(nlohmann::json& j, const TransformStep& s) {
    j = nlohmann::json{{"kind", s.kind}, {"params", s.params}};
}

inline void from_json(const nlohmann::json& j, TransformStep& s) {
    const std::string kind = j.at("kind").get<std::string>();
    s.kind = j.at("kind").get<StepKind>();
    // The enum macro maps unknown strings to the first enumerator.
    if (nlohmann::json(s.kind).get<std::string>() != kind) {
        throw Error(Errc::MalformedManifest, "unknown transform kind '" + kind + "'");
    }
    s.params = j.at("params").get<std::vector<double>>();
    if (s.params.size() != step_arity(s.kind)) {
        throw Error(Errc::MalformedManifest, "wrong parameter count for " + kind);
    }
}

inline void to_json(nlohmann::json& j, const TransformChain& c) {
    j = nlohmann::json{{"seed", c.seed}, {"source_id", c.source_id}, {"steps", c.steps}};
}

inline void from_json(const nlohmann::json& j, TransformChain& c) {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.source_id = j.at("source_id").get<std::string>();
    c.steps = j.at("steps").get<std::vector<TransformStep>>();
}

}  // namespace earbio

#endif

#ifndef EARBIO_AUGMENTATION_HPP
#define EARBIO_AUGMENTATION_HPP

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>

#include "earbio/chain.hpp"
#include "earbio/dataset.hpp"
#include "earbio/geometry.hpp"
#include "earbio/parallel.hpp"
#include "earbio/photometric.hpp"
#include "earbio/random.hpp"

namespace earbio {

struct AugmentConfig {
    JitterSpec jitter;
    double max_rotation = 15.0;  // degrees
    double flip_prob = 0.5;
    double crop_prob = 0.5;
    std::array<double, 2> crop_scale_range{0.8, 1.0};
    double affine_prob = 0.3;
    double max_shear = 0.1;
    double perspective_prob = 0.3;
    double perspective_distortion = 0.1;  // max corner shift, fraction of the side
    double grayscale_prob = 0.1;
    int chains_per_image = 10;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!jitter.valid()) throw Error(Errc::InvalidConfig, "jitter deltas must be finite, >= 0, hue <= 0.5");
        if (!(max_rotation >= 0.0 && std::isfinite(max_rotation))) throw Error(Errc::InvalidConfig, "max_rotation");
        if (!prob(flip_prob) || !prob(crop_prob) || !prob(affine_prob) || !prob(perspective_prob) ||
            !prob(grayscale_prob)) {
            throw Error(Errc::InvalidConfig, "probabilities must lie in [0, 1]");
        }
        if (!(crop_scale_range[0] > 0.0 && crop_scale_range[0] <= crop_scale_range[1] && crop_scale_range[1] <= 1.0)) {
            throw Error(Errc::InvalidConfig, "crop_scale_range must satisfy 0 < lo <= hi <= 1");
        }
        if (!(max_shear >= 0.0 && max_shear < 1.0)) throw Error(Errc::InvalidConfig, "max_shear must be in [0, 1)");
        if (!(perspective_distortion >= 0.0 && perspective_distortion < 0.5)) {
            throw Error(Errc::InvalidConfig, "perspective_distortion must be in [0, 0.5)");
        }
        if (chains_per_image < 0) throw Error(Errc::InvalidConfig, "chains_per_image must be >= 0");
    }
};

/// Draws a chain: rotation, then flip / crop / affine / perspective by
/// probability, then photometric jitter and optional grayscale. Steps whose
/// range is zero are omitted. Deterministic in (cfg, rng_seed, source_id).
inline TransformChain sample_chain(const AugmentConfig& cfg, std::uint64_t rng_seed, const std::string& source_id) {
    cfg.validate();
    Rng rng(combine_seed(rng_seed, source_id));
    TransformChain chain{{}, rng_seed, source_id};
    auto push = [&](StepKind k, std::vector<double> p) { chain.steps.push_back({k, std::move(p)}); };

    push(StepKind::Rotate, {rng.uniform(-cfg.max_rotation, cfg.max_rotation)});
    if (rng.bernoulli(cfg.flip_prob)) push(StepKind::FlipH, {});
    if (rng.bernoulli(cfg.crop_prob)) {
        const double s = rng.uniform(cfg.crop_scale_range[0], cfg.crop_scale_range[1]);
        const double ox = rng.uniform();
        const double oy = rng.uniform();
        push(StepKind::CropResize, {s, ox, oy});
    }
    if (rng.bernoulli(cfg.affine_prob)) {
        const double sh = cfg.max_shear;
        const double a = 1.0 + rng.uniform(-sh, sh);
        const double b = rng.uniform(-sh, sh);
        const double d = rng.uniform(-sh, sh);
        const double e = 1.0 + rng.uniform(-sh, sh);
        push(StepKind::Affine, {a, b, d, e});
    }
    if (rng.bernoulli(cfg.perspective_prob)) {
        std::vector<double> p(8);
        for (double& v : p) v = rng.uniform(-cfg.perspective_distortion, cfg.perspective_distortion);
        push(StepKind::Perspective, std::move(p));
    }

    const auto& j = cfg.jitter;
    auto factor = [&](double delta) { return rng.uniform(std::max(0.0, 1.0 - delta), 1.0 + delta); };
    if (j.brightness > 0.0) push(StepKind::Brightness, {factor(j.brightness)});
    if (j.contrast > 0.0) push(StepKind::Contrast, {factor(j.contrast)});
    if (j.saturation > 0.0) push(StepKind::Saturation, {factor(j.saturation)});
    if (j.hue > 0.0) push(StepKind::Hue, {rng.uniform(-j.hue, j.hue)});
    if (rng.bernoulli(cfg.grayscale_prob)) push(StepKind::Grayscale3, {});
    return chain;
}

/// Geometric steps fill uncovered pixels with this value.
inline constexpr double kWarpFill = 0.0;

inline Image apply_step(const Image& img, const TransformStep& s) {
    if (s.params.size() != step_arity(s.kind)) throw Error(Errc::InvalidArgument, "transform parameter count");
    const int w = img.width(), h = img.height();
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const auto& p = s.params;
    switch (s.kind) {
        case StepKind::Rotate: return warp_affine(img, make_rotation(p[0], cx, cy), kWarpFill);
        case StepKind::FlipH: return warp_affine(img, make_flip_h(w), kWarpFill);
        case StepKind::CropResize: {
            const int cw = std::clamp(static_cast<int>(std::lround(p[0] * w)), 1, w);
            const int ch = std::clamp(static_cast<int>(std::lround(p[0] * h)), 1, h);
            const PixelRect r{static_cast<int>(std::lround(p[1] * (w - cw))),
                              static_cast<int>(std::lround(p[2] * (h - ch))), cw, ch};
            return warp_affine(img, make_crop_resize(r, w, h), kWarpFill);
        }
        case StepKind::Affine: {
            // source = L (q - c) + c
            const AffineMatrix m{{p[0], p[1], cx - p[0] * cx - p[1] * cy, p[2], p[3], cy - p[2] * cx - p[3] * cy}};
            return warp_affine(img, m, kWarpFill);
        }
        case StepKind::Perspective: {
            const double W = w - 1.0, H = h - 1.0;
            const std::array<std::array<double, 2>, 4> dst{{{0, 0}, {W, 0}, {W, H}, {0, H}}};
            std::array<std::array<double, 2>, 4> src{};
            for (int i = 0; i < 4; ++i) src[i] = {dst[i][0] + p[2 * i] * w, dst[i][1] + p[2 * i + 1] * h};
            return warp_perspective(img, homography_from_points(dst, src), kWarpFill);
        }
        case StepKind::Brightness: return adjust_brightness(img, p[0]);
        case StepKind::Contrast: return adjust_contrast(img, p[0]);
        // Saturation and hue have nothing to act on in a single-channel image.
        case StepKind::Saturation: return img.channels() == 3 ? adjust_saturation(img, p[0]) : img;
        case StepKind::Hue: return img.channels() == 3 ? adjust_hue(img, p[0]) : img;
        case StepKind::Grayscale3: return grayscale3(img);
    }
    return img;
}

inline Image apply_chain(const Image& img, const TransformChain& chain) {
    Image out = img;
    for (const auto& s : chain.steps) out = apply_step(out, s);
    return out;
}

/// Seed of the k-th chain of a source image; independent of every other image.
inline std::uint64_t chain_seed(std::uint64_t master_seed, const std::string& source_id, int index) {
    return combine_seed(combine_seed(master_seed, source_id), static_cast<std::uint64_t>(index));
}

/// File-system-safe stem derived from a record id.
inline std::string file_stem_for(const std::string& id) {
    std::string s = id;
    const auto dot = s.find_last_of('.');
    const auto slash = s.find_last_of('/');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) s.erase(dot);
    for (char& c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return s;
}

/// Writes cfg.chains_per_image augmented PNGs per TRAIN record into out_dir
/// and returns the manifest with each augmented record placed right after its
/// source. TEST and UNSPLIT records are copied untouched.
inline DatasetManifest expand_dataset(const DatasetManifest& m, const AugmentConfig& cfg, std::uint64_t master_seed,
                                      const fs::path& out_dir, int jobs = 1) {
    cfg.validate();
    if (cfg.chains_per_image == 0) return m;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < m.records.size(); ++i)
        if (m.records[i].split == Split::Train) train.push_back(i);

    const auto per = static_cast<std::size_t>(cfg.chains_per_image);
    std::vector<std::vector<Record>> produced(m.records.size());
    parallel_for(train.size(), jobs, [&](std::size_t t) {
        const Record& src = m.records[train[t]];
        Image img;
        try {
            img = load_image(src.path);
        } catch (const Error& e) {
            throw Error(e.code(), "record " + src.id + " (" + src.path.string() + "): " + e.what());
        }
        auto& out = produced[train[t]];
        out.reserve(per);
        for (std::size_t k = 0; k < per; ++k) {
            const int idx = static_cast<int>(k);
            Record r;
            r.id = src.id + "#aug" + std::to_string(k);
            r.path = out_dir / (file_stem_for(src.id) + "__aug" + std::to_string(k) + ".png");
            r.label = src.label;
            r.split = Split::Train;
            r.provenance = Provenance::Augmented;
            r.chain = sample_chain(cfg, chain_seed(master_seed, src.id, idx), src.id);
            save_image(apply_chain(img, *r.chain), r.path);
            out.push_back(std::move(r));
        }
    });

    DatasetManifest res = m;
    res.records.clear();
    res.records.reserve(m.records.size() + train.size() * per);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        res.records.push_back(m.records[i]);
        for (auto& r : produced[i]) res.records.push_back(std::move(r));
    }
    return res;
}

}  // namespace earbio

#endif

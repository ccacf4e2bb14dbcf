#ifndef EARBIO_PHOTOMETRIC_HPP
#define EARBIO_PHOTOMETRIC_HPP

#include <algorithm>
#include <array>
#include <cmath>

#include "earbio/image.hpp"

namespace earbio {

/// Maximum jitter deltas. Factors are drawn from [max(0, 1 - d), 1 + d];
/// the hue shift from [-hue, hue] (fraction of the hue circle).
struct JitterSpec {
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.05;

    bool valid() const noexcept {
        auto ok = [](double d) { return std::isfinite(d) && d >= 0.0; };
        return ok(brightness) && ok(contrast) && ok(saturation) && ok(hue) && hue <= 0.5;
    }
};

namespace detail {

inline void check_factor(double f) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw Error(Errc::NegativeFactor, "factor must be finite and >= 0");
}

inline double clamp01(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

inline Image adjust_brightness(const Image& img, double factor) {
    detail::check_factor(factor);
    Image out = img;
    for (double& v : out.data()) v = detail::clamp01(v * factor);
    return out;
}

inline double mean_luma(const Image& img) {
    const Image gray = img.channels() == 3 ? to_grayscale(img) : img;
    double sum = 0.0;
    for (double v : gray.data()) sum += v;
    return sum / static_cast<double>(gray.size());
}

/// Contrast about the image's mean luma.
inline Image adjust_contrast(const Image& img, double factor) {
    detail::check_factor(factor);
    const double mu = mean_luma(img);
    Image out = img;
    for (double& v : out.data()) v = detail::clamp01(mu + factor * (v - mu));
    return out;
}

inline Image adjust_saturation(const Image& img, double factor) {
    detail::check_factor(factor);
    if (img.channels() != 3) throw Error(Errc::NotRgb, "saturation needs an RGB image");
    Image out = img;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        const double r = d[i], g = d[i + 1], b = d[i + 2];
        const double gray = (r == g && g == b) ? r : luma(r, g, b);
        for (int c = 0; c < 3; ++c) d[i + c] = detail::clamp01(gray + factor * (d[i + c] - gray));
    }
    return out;
}

/// Hexcone HSV, all components in [0, 1].
struct Hsv {
    double h, s, v;
};

inline Hsv rgb_to_hsv(double r, double g, double b) noexcept {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    Hsv out{0.0, mx > 0.0 ? delta / mx : 0.0, mx};
    if (delta <= 0.0) return out;
    double h;
    if (mx == r) h = (g - b) / delta;
    else if (mx == g) h = 2.0 + (b - r) / delta;
    else h = 4.0 + (r - g) / delta;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    out.h = h;
    return out;
}

inline std::array<double, 3> hsv_to_rgb(const Hsv& c) noexcept {
    if (c.s <= 0.0) return {c.v, c.v, c.v};
    double h6 = c.h * 6.0;
    if (h6 >= 6.0) h6 -= 6.0;
    const int sector = static_cast<int>(std::floor(h6));
    const double f = h6 - sector;
    const double p = c.v * (1.0 - c.s);
    const double q = c.v * (1.0 - c.s * f);
    const double t = c.v * (1.0 - c.s * (1.0 - f));
    switch (sector) {
        case 0: return {c.v, t, p};
        case 1: return {q, c.v, p};
        case 2: return {p, c.v, t};
        case 3: return {p, q, c.v};
        case 4: return {t, p, c.v};
        default: return {c.v, p, q};
    }
}

/// Rotates hue by `shift` of the full circle. Zero-saturation pixels are left untouched.
inline Image adjust_hue(const Image& img, double shift) {
    if (img.channels() != 3) throw Error(Errc::NotRgb, "hue needs an RGB image");
    if (!(shift >= -0.5 && shift <= 0.5)) throw Error(Errc::ShiftOutOfRange, "hue shift must be in [-0.5, 0.5]");
    Image out = img;
    if (shift == 0.0) return out;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        Hsv hsv = rgb_to_hsv(d[i], d[i + 1], d[i + 2]);
        if (hsv.s <= 0.0) continue;
        hsv.h += shift;
        hsv.h -= std::floor(hsv.h);
        const auto rgb = hsv_to_rgb(hsv);
        for (int c = 0; c < 3; ++c) d[i + c] = detail::clamp01(rgb[c]);
    }
    return out;
}

/// Luma replicated to three channels (grayscale input passes through replicated).
inline Image grayscale3(const Image& img) {
    return img.channels() == 3 ? to_rgb(to_grayscale(img)) : to_rgb(img);
}

}  // namespace earbio

#endif

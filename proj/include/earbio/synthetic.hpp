#ifndef EARBIO_SYNTHETIC_HPP
#define EARBIO_SYNTHETIC_HPP

// Procedural "ear glyph" images: a helix ring with a class-specific opening,
// an antihelix arc, concha, tragus and lobe, rendered under random pose,
// lighting and sensor noise, with hair-like clutter near the image border.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "earbio/image_io.hpp"
#include "earbio/random.hpp"

namespace earbio::synth {

/// Shape parameters shared by every image of one subject. Lengths are in
/// units of the image width, centred on the ear.
struct EarShape {
    double helix_rx, helix_ry, helix_thickness;
    double gap_center, gap_width;  // radians; opening of the helix ring
    double anti_scale, anti_start, anti_end, anti_thickness;
    double concha_x, concha_y, concha_r;
    double lobe_x, lobe_y, lobe_r;
    double tragus_angle;
    std::array<double, 3> tone;  // skin colour
};

inline EarShape sample_shape(std::uint64_t dataset_seed, int subject) {
    Rng r(combine_seed(combine_seed(dataset_seed, "ear-shape"), static_cast<std::uint64_t>(subject)));
    constexpr double pi = std::numbers::pi;
    EarShape s{};
    s.helix_rx = r.uniform(0.17, 0.25);
    s.helix_ry = r.uniform(0.30, 0.40);
    s.helix_thickness = r.uniform(0.025, 0.05);
    s.gap_center = r.uniform(0.75 * pi, 1.25 * pi);
    s.gap_width = r.uniform(0.25 * pi, 0.6 * pi);
    s.anti_scale = r.uniform(0.5, 0.72);
    s.anti_start = r.uniform(-0.6 * pi, 0.0);
    s.anti_end = s.anti_start + r.uniform(0.6 * pi, 1.3 * pi);
    s.anti_thickness = r.uniform(0.015, 0.03);
    s.concha_x = r.uniform(-0.06, 0.04);
    s.concha_y = r.uniform(-0.05, 0.08);
    s.concha_r = r.uniform(0.05, 0.09);
    s.lobe_x = r.uniform(-0.06, 0.06);
    s.lobe_y = r.uniform(0.30, 0.42);
    s.lobe_r = r.uniform(0.06, 0.11);
    s.tragus_angle = r.uniform(0.8 * pi, 1.2 * pi);
    s.tone = {r.uniform(0.55, 0.85), 0.0, 0.0};
    s.tone[1] = s.tone[0] * r.uniform(0.7, 0.85);
    s.tone[2] = s.tone[0] * r.uniform(0.55, 0.75);
    return s;
}

struct RenderOptions {
    int width = 123;
    int height = 175;
    double max_rotation_deg = 12.0;
    double max_shift = 0.05;   // fraction of width
    double scale_jitter = 0.08;
    double lighting_jitter = 0.25;
    double noise_sigma = 0.03;
    int hair_strands = 14;
};

namespace detail {

inline double smooth_band(double d, double half_width, double aa) {
    // 1 inside |d| < half_width, fading to 0 over `aa`.
    const double t = (std::abs(d) - half_width) / aa;
    return std::clamp(0.5 - t, 0.0, 1.0);
}

inline double angle_dist(double a, double b) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double d = std::fmod(std::abs(a - b), two_pi);
    return d > std::numbers::pi ? two_pi - d : d;
}

inline double gaussian(Rng& r) {
    // Box-Muller; platform stable since it only uses Rng::uniform.
    const double u1 = std::max(r.uniform(), 1e-300), u2 = r.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Renders one image of `shape`; all nuisance variation comes from `image_seed`.
inline Image render_ear(const EarShape& s, std::uint64_t image_seed, const RenderOptions& o = {}) {
    Rng r(combine_seed(image_seed, "ear-render"));
    const double rot = r.uniform(-o.max_rotation_deg, o.max_rotation_deg) * std::numbers::pi / 180.0;
    const double scale = 1.0 + r.uniform(-o.scale_jitter, o.scale_jitter);
    const double tx = r.uniform(-o.max_shift, o.max_shift), ty = r.uniform(-o.max_shift, o.max_shift);
    const double gain = 1.0 + r.uniform(-o.lighting_jitter, o.lighting_jitter);
    const double grad_x = r.uniform(-0.15, 0.15), grad_y = r.uniform(-0.15, 0.15);

    struct Strand { double x0, y0, dx, dy, len, width, shade; };
    std::vector<Strand> hair;
    for (int i = 0; i < o.hair_strands; ++i) {
        // Strands start on the top or left border and reach inward a little.
        const bool top = r.bernoulli(0.6);
        const double a = r.uniform(0.2, 1.2);
        hair.push_back({top ? r.uniform(0.0, 1.0) : 0.0, top ? 0.0 : r.uniform(0.0, 1.3),
                        top ? std::sin(a) * (r.bernoulli(0.5) ? 1 : -1) : std::cos(a - 0.7), top ? std::cos(a - 0.2) : std::sin(a - 0.7),
                        r.uniform(0.08, 0.2), r.uniform(0.004, 0.012), r.uniform(0.05, 0.25)});
    }

    Image img(o.width, o.height, 3);
    const double cs = std::cos(rot), sn = std::sin(rot);
    const double inv_w = 1.0 / o.width;
    const double aa = 1.2 * inv_w;
    const double cx = 0.5 + tx, cy = 0.5 * o.height * inv_w + ty;
    for (int py = 0; py < o.height; ++py)
        for (int px = 0; px < o.width; ++px) {
            const double ux = (px + 0.5) * inv_w, uy = (py + 0.5) * inv_w;
            // Canonical ear coordinates.
            const double dx = (ux - cx) / scale, dy = (uy - cy) / scale;
            const double ex = cs * dx + sn * dy, ey = -sn * dx + cs * dy;

            double shade = 1.0;
            const double nr = std::hypot(ex / s.helix_rx, ey / s.helix_ry);
            const double ang = std::atan2(ey / s.helix_ry, ex / s.helix_rx);
            const double rmin = std::min(s.helix_rx, s.helix_ry);
            // Outer ear surface is slightly brighter than the head.
            if (nr < 1.0) shade += 0.08;
            const double open = detail::angle_dist(ang, s.gap_center) < 0.5 * s.gap_width ? 0.0 : 1.0;
            shade -= 0.45 * open * detail::smooth_band((nr - 1.0) * rmin, s.helix_thickness * 0.5, aa);
            shade += 0.15 * open * detail::smooth_band((nr - 1.0) * rmin + s.helix_thickness, s.helix_thickness * 0.35, aa);
            // Antihelix arc.
            const double na = std::hypot(ex / (s.helix_rx * s.anti_scale), ey / (s.helix_ry * s.anti_scale));
            double a2 = ang;
            while (a2 < s.anti_start) a2 += 2.0 * std::numbers::pi;
            if (a2 <= s.anti_end) shade -= 0.35 * detail::smooth_band((na - 1.0) * rmin * s.anti_scale, s.anti_thickness * 0.5, aa);
            // Concha cavity.
            const double dc = std::hypot(ex - s.concha_x, (ey - s.concha_y) * 0.8) - s.concha_r;
            shade -= 0.4 * std::clamp(0.5 - dc / (2.0 * aa), 0.0, 1.0) * std::clamp(1.0 + dc / s.concha_r, 0.3, 1.0);
            // Tragus bump near the opening.
            const double tx0 = std::cos(s.tragus_angle) * s.helix_rx * 0.75, ty0 = std::sin(s.tragus_angle) * s.helix_ry * 0.2;
            shade -= 0.3 * detail::smooth_band(std::hypot(ex - tx0, ey - ty0) - 0.035, 0.008, aa);
            // Lobe outline.
            shade -= 0.3 * detail::smooth_band(std::hypot(ex - s.lobe_x, ey - s.lobe_y) - s.lobe_r, 0.008, aa);

            double hair_dark = 0.0;
            for (const auto& h : hair) {
                const double qx = ux - h.x0, qy = uy - h.y0;
                const double t = std::clamp(qx * h.dx + qy * h.dy, 0.0, h.len);
                const double d = std::hypot(qx - t * h.dx, qy - t * h.dy);
                hair_dark = std::max(hair_dark, detail::smooth_band(d, h.width, aa) * (1.0 - h.shade));
            }

            const double light = gain * (1.0 + grad_x * (ux - 0.5) + grad_y * (uy - 0.7));
            for (int c = 0; c < 3; ++c) {
                double v = s.tone[c] * shade * light;
                v = v * (1.0 - hair_dark) + 0.08 * hair_dark;
                img.at(px, py, c) = v;
            }
        }
    for (double& v : img.data()) v = std::clamp(v + o.noise_sigma * detail::gaussian(r), 0.0, 1.0);
    return img;
}

inline std::string subject_name(int subject) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%03d", subject);
    return buf;
}

/// Writes classes x per_class PNGs as root/subject_XXX/img_YY.png.
inline void write_glyph_dataset(const fs::path& root, int classes, int per_class, std::uint64_t seed,
                                const RenderOptions& o = {}) {
    for (int c = 0; c < classes; ++c) {
        const EarShape shape = sample_shape(seed, c);
        const fs::path dir = root / subject_name(c);
        fs::create_directories(dir);
        for (int i = 0; i < per_class; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%02d.png", i);
            const auto img_seed = combine_seed(combine_seed(seed, static_cast<std::uint64_t>(c)), static_cast<std::uint64_t>(i));
            save_image(render_ear(shape, img_seed, o), dir / name);
        }
    }
}

}  // namespace earbio::synth

#endif

#ifndef EARBIO_GEOMETRY_HPP
#define EARBIO_GEOMETRY_HPP

// Inverse-mapped warps. Every matrix here maps OUTPUT pixel coordinates to
// SOURCE pixel coordinates; pixel (i, j) has its centre at (i, j).

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "earbio/image.hpp"

namespace earbio {

struct AffineMatrix {
    // [m0 m1 m2; m3 m4 m5]
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    static AffineMatrix identity() { return {}; }
    double det() const noexcept { return m[0] * m[4] - m[1] * m[3]; }
    friend bool operator==(const AffineMatrix&, const AffineMatrix&) = default;
};

struct PerspectiveMatrix {
    // Row-major 3x3, m[8] normalized to 1.
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static PerspectiveMatrix identity() { return {}; }
    static PerspectiveMatrix from_affine(const AffineMatrix& a) {
        return {{a.m[0], a.m[1], a.m[2], a.m[3], a.m[4], a.m[5], 0, 0, 1}};
    }
    double det() const noexcept {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
    friend bool operator==(const PerspectiveMatrix&, const PerspectiveMatrix&) = default;
};

/// Matrix product a*b: warp_affine(warp_affine(img, a), b) == warp_affine(img, compose(a, b))
/// up to interpolation error.
inline AffineMatrix compose(const AffineMatrix& a, const AffineMatrix& b) {
    const auto& p = a.m;
    const auto& q = b.m;
    return {{p[0] * q[0] + p[1] * q[3], p[0] * q[1] + p[1] * q[4], p[0] * q[2] + p[1] * q[5] + p[2],
             p[3] * q[0] + p[4] * q[3], p[3] * q[1] + p[4] * q[4], p[3] * q[2] + p[4] * q[5] + p[5]}};
}

/// Bilinear sample of channel c at (sx, sy). Points beyond half a pixel
/// outside the image return `fill`; points inside are clamped to the pixel grid.
inline double sample_bilinear(const Image& img, double sx, double sy, int c, double fill) noexcept {
    const int w = img.width(), h = img.height();
    if (!(sx >= -0.5 && sx <= w - 0.5 && sy >= -0.5 && sy <= h - 0.5)) return fill;
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = sx - x0, fy = sy - y0;
    return (1.0 - fx) * (1.0 - fy) * img.at(x0, y0, c) + fx * (1.0 - fy) * img.at(x1, y0, c) +
           (1.0 - fx) * fy * img.at(x0, y1, c) + fx * fy * img.at(x1, y1, c);
}

inline Image warp_affine(const Image& img, const AffineMatrix& a, double fill, int out_w, int out_h) {
    if (std::abs(a.det()) < 1e-12) throw Error(Errc::SingularMatrix, "affine matrix is not invertible");
    if (out_w <= 0 || out_h <= 0) throw Error(Errc::DegenerateTarget, "output size must be positive");
    const auto& m = a.m;
    Image out(out_w, out_h, img.channels());
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const double sx = m[0] * x + m[1] * y + m[2];
            const double sy = m[3] * x + m[4] * y + m[5];
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c, fill);
        }
    return out;
}

inline Image warp_affine(const Image& img, const AffineMatrix& a, double fill = 0.0) {
    return warp_affine(img, a, fill, img.width(), img.height());
}

inline Image warp_perspective(const Image& img, const PerspectiveMatrix& p, double fill = 0.0) {
    if (std::abs(p.det()) < 1e-12) throw Error(Errc::SingularMatrix, "perspective matrix is not invertible");
    const auto& m = p.m;
    Image out(img.width(), img.height(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double u = m[0] * x + m[1] * y + m[2];
            const double v = m[3] * x + m[4] * y + m[5];
            const double w = m[6] * x + m[7] * y + m[8];
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = w <= 1e-12 ? fill : sample_bilinear(img, u / w, v / w, c, fill);
            }
        }
    return out;
}

/// Half-pixel-centre bilinear resize: sx = (x + 0.5) * W / w - 0.5, clamped to [0, W - 1].
inline Image resize_bilinear(const Image& img, int w, int h) {
    if (w <= 0 || h <= 0) throw Error(Errc::DegenerateTarget, "resize target must be positive");
    const double scale_x = static_cast<double>(img.width()) / w;
    const double scale_y = static_cast<double>(img.height()) / h;
    Image out(w, h, img.channels());
    for (int y = 0; y < h; ++y) {
        const double sy = (y + 0.5) * scale_y - 0.5;
        for (int x = 0; x < w; ++x) {
            const double sx = (x + 0.5) * scale_x - 0.5;
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c, 0.0);
        }
    }
    return out;
}

/// Rotation by `degrees` about (cx, cy). Multiples of 90 degrees are exact.
inline AffineMatrix make_rotation(double degrees, double cx, double cy) {
    double a = std::fmod(degrees, 360.0);
    if (a < 0.0) a += 360.0;
    double cs, sn;
    if (a == 0.0) { cs = 1.0; sn = 0.0; }
    else if (a == 90.0) { cs = 0.0; sn = 1.0; }
    else if (a == 180.0) { cs = -1.0; sn = 0.0; }
    else if (a == 270.0) { cs = 0.0; sn = -1.0; }
    else {
        const double r = a * (3.14159265358979323846 / 180.0);
        cs = std::cos(r);
        sn = std::sin(r);
    }
    // source = R(-angle) * (p - c) + c
    return {{cs, sn, cx - cs * cx - sn * cy, -sn, cs, cy + sn * cx - cs * cy}};
}

inline AffineMatrix make_flip_h(int width) {
    return {{-1.0, 0.0, static_cast<double>(width - 1), 0.0, 1.0, 0.0}};
}

/// Maps an out_w x out_h output onto rectangle r with the same half-pixel convention as resize_bilinear.
inline AffineMatrix make_crop_resize(const PixelRect& r, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0 || r.w <= 0 || r.h <= 0) {
        throw Error(Errc::DegenerateTarget, "crop and output sizes must be positive");
    }
    const double sx = static_cast<double>(r.w) / out_w;
    const double sy = static_cast<double>(r.h) / out_h;
    return {{sx, 0.0, r.x + 0.5 * sx - 0.5, 0.0, sy, r.y + 0.5 * sy - 0.5}};
}

/// Homography taking each dst[i] to src[i] (output corner -> source corner).
inline PerspectiveMatrix homography_from_points(const std::array<std::array<double, 2>, 4>& dst,
                                                const std::array<std::array<double, 2>, 4>& src) {
    Eigen::Matrix<double, 8, 8> A;
    Eigen::Matrix<double, 8, 1> rhs;
    for (int i = 0; i < 4; ++i) {
        const double x = dst[i][0], y = dst[i][1], u = src[i][0], v = src[i][1];
        A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        rhs(2 * i) = u;
        rhs(2 * i + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(A);
    if (!lu.isInvertible()) throw Error(Errc::SingularMatrix, "degenerate point correspondence");
    const Eigen::Matrix<double, 8, 1> h = lu.solve(rhs);
    PerspectiveMatrix p{{h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0}};
    if (std::abs(p.det()) < 1e-12) throw Error(Errc::SingularMatrix, "degenerate homography");
    return p;
}

struct ZoomSpec {
    int target_w = 320;
    int target_h = 490;
    double margin_x = (1.0 - 320.0 / 492.0) / 2.0;
    double margin_y = (1.0 - 490.0 / 702.0) / 2.0;

    /// No crop, no resize.
    static ZoomSpec identity(int w, int h) { return {w, h, 0.0, 0.0}; }
};

/// The central crop zoom_crop takes before resizing.
inline PixelRect zoom_region(int width, int height, const ZoomSpec& z) {
    if (!(z.margin_x >= 0.0 && z.margin_x < 0.5 && z.margin_y >= 0.0 && z.margin_y < 0.5)) {
        throw Error(Errc::InvalidMargins, "zoom margins must lie in [0, 0.5)");
    }
    const int cw = std::max(1, static_cast<int>(std::lround(width * (1.0 - 2.0 * z.margin_x))));
    const int ch = std::max(1, static_cast<int>(std::lround(height * (1.0 - 2.0 * z.margin_y))));
    return {(width - cw) / 2, (height - ch) / 2, cw, ch};
}

/// Symmetric centre crop followed by a bilinear resize to the target size.
inline Image zoom_crop(const Image& img, const ZoomSpec& z = {}) {
    if (z.target_w <= 0 || z.target_h <= 0) throw Error(Errc::DegenerateTarget, "zoom target must be positive");
    const PixelRect r = zoom_region(img.width(), img.height(), z);
    return resize_bilinear(crop(img, r), z.target_w, z.target_h);
}

}  // namespace earbio

#endif

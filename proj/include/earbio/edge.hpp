#ifndef EARBIO_EDGE_HPP
#define EARBIO_EDGE_HPP

// Canny edge detection: Gaussian smoothing, Sobel gradients, non-maximum
// suppression, double thresholding and hysteresis linking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "earbio/image.hpp"

namespace earbio {

/// Square (2r+1) x (2r+1) kernel, weights stored row-major with (0, 0) at the centre.
struct Kernel2D {
    int radius = 0;
    std::vector<double> weights{1.0};

    int side() const noexcept { return 2 * radius + 1; }
    double at(int dx, int dy) const noexcept {
        return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
    }
    double& at(int dx, int dy) noexcept {
        return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
    }

    static Kernel2D from_rows(int radius, std::vector<double> w) {
        const auto s = static_cast<std::size_t>(2 * radius + 1);
        if (radius < 0 || w.size() != s * s) throw Error(Errc::ShapeMismatch, "kernel weight count");
        return Kernel2D{radius, std::move(w)};
    }
};

inline Kernel2D gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(Errc::InvalidSigma, "sigma must be > 0");
    if (radius < 0) throw Error(Errc::InvalidArgument, "kernel radius must be >= 0");
    Kernel2D k;
    k.radius = radius;
    k.weights.assign(static_cast<std::size_t>(k.side()) * k.side(), 0.0);
    const double denom = 2.0 * sigma * sigma;
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double w = std::exp(-static_cast<double>(dx * dx + dy * dy) / denom);
            k.at(dx, dy) = w;
            sum += w;
        }
    for (double& w : k.weights) w /= sum;
    return k;
}

enum class BorderPolicy { ReplicateEdge };

/// out[y,x] = sum k[dy,dx] * img[y-dy, x-dx] with replicate-edge borders. No clamping of the result.
inline Image convolve2d(const Image& img, const Kernel2D& k,
                        BorderPolicy border = BorderPolicy::ReplicateEdge) {
    (void)border;  // replicate-edge is the only policy
    if (img.channels() != 1) throw Error(Errc::InvalidArgument, "convolve2d expects a single-channel image");
    const int w = img.width(), h = img.height(), r = k.radius;
    Image out(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) acc += k.at(dx, dy) * img.clamped(x - dx, y - dy);
            out.at(x, y) = acc;
        }
    return out;
}

struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> gx, gy, magnitude, direction;

    std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width + x; }
};

/// Sobel gradients, y axis pointing down. direction is atan2(gy, gx) folded into (-pi, pi].
inline GradientField sobel_gradients(const Image& img) {
    if (img.channels() != 1) throw Error(Errc::InvalidArgument, "sobel_gradients expects a single-channel image");
    if (img.width() < 3 || img.height() < 3) throw Error(Errc::ImageTooSmall, "sobel needs at least 3x3");
    // Correlation with [-1 0 1; -2 0 2; -1 0 1] and its transpose, replicate-edge
    // border. Differences are taken first so flat regions give exactly zero.
    const int w = img.width(), h = img.height();
    Image gx(w, h, 1), gy(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto p = [&](int dx, int dy) { return img.clamped(x + dx, y + dy); };
            gx.at(x, y) = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
            gy.at(x, y) = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
        }

    GradientField g;
    g.width = img.width();
    g.height = img.height();
    g.gx.assign(gx.data().begin(), gx.data().end());
    g.gy.assign(gy.data().begin(), gy.data().end());
    const std::size_t n = g.gx.size();
    g.magnitude.resize(n);
    g.direction.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.magnitude[i] = std::sqrt(g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i]);
        double d = std::atan2(g.gy[i], g.gx[i]);
        if (d == -std::numbers::pi) d = std::numbers::pi;
        g.direction[i] = d;
    }
    return g;
}

/// Quantizes a gradient direction to 0, 45, 90 or 135 degrees; a value on a
/// bin boundary goes to the lower bin. Returns the bin index 0..3.
inline int quantize_direction(double radians) noexcept {
    double deg = radians * (180.0 / std::numbers::pi);
    if (deg < 0.0) deg += 180.0;
    if (deg >= 180.0) deg -= 180.0;
    if (deg <= 22.5) return 0;
    if (deg <= 67.5) return 1;
    if (deg <= 112.5) return 2;
    if (deg <= 157.5) return 3;
    return 0;
}

/// Keeps magnitude[y,x] when it is a maximum along the quantized direction, else 0.
///
/// A pixel survives when it is >= its backward neighbour and strictly > its
/// forward neighbour. The asymmetric tie-break thins two-pixel plateaus (a
/// symmetric step edge) to a single pixel. Pixels whose neighbour pair leaves
/// the image are set to 0.
inline Image non_max_suppression(const GradientField& g) {
    static constexpr int off[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
    Image out(g.width, g.height, 1);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const auto i = g.index(x, y);
            const double m = g.magnitude[i];
            if (m <= 0.0) continue;
            const int b = quantize_direction(g.direction[i]);
            const int fx = x + off[b][0], fy = y + off[b][1];
            const int bx = x - off[b][0], by = y - off[b][1];
            if (fx < 0 || fx >= g.width || fy < 0 || fy >= g.height) continue;
            if (bx < 0 || bx >= g.width || by < 0 || by >= g.height) continue;
            if (m > g.magnitude[g.index(fx, fy)] && m >= g.magnitude[g.index(bx, by)]) out.at(x, y) = m;
        }
    return out;
}

enum class EdgeClass : std::uint8_t { None = 0, Weak = 1, Strong = 2 };

struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<EdgeClass> classes;
    bool finalized = false;

    EdgeClass at(int x, int y) const noexcept { return classes[static_cast<std::size_t>(y) * width + x]; }
    EdgeClass& at(int x, int y) noexcept { return classes[static_cast<std::size_t>(y) * width + x]; }

    /// Strong -> 1, everything else -> 0.
    Image to_image() const {
        Image out(width, height, 1);
        for (std::size_t i = 0; i < classes.size(); ++i)
            out.data()[i] = classes[i] == EdgeClass::Strong ? 1.0 : 0.0;
        return out;
    }
};

/// Thresholds are fractions of the maximum value of `nms`.
inline EdgeMap double_threshold(const Image& nms, double low, double high) {
    if (!(low < high)) throw Error(Errc::ThresholdOrder, "low threshold must be below high");
    if (low < 0.0) throw Error(Errc::InvalidArgument, "low threshold must be >= 0");
    if (nms.channels() != 1) throw Error(Errc::InvalidArgument, "double_threshold expects a single-channel image");
    EdgeMap em{nms.width(), nms.height(), std::vector<EdgeClass>(nms.size(), EdgeClass::None), false};
    const double peak = *std::max_element(nms.data().begin(), nms.data().end());
    if (!(peak > 0.0)) return em;
    const double hi = high * peak, lo = low * peak;
    auto src = nms.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = src[i];
        if (v <= 0.0) continue;
        if (v >= hi) em.classes[i] = EdgeClass::Strong;
        else if (v >= lo) em.classes[i] = EdgeClass::Weak;
    }
    return em;
}

/// Promotes every Weak pixel 8-connected (through Weak pixels) to a Strong one; drops the rest.
inline EdgeMap hysteresis_link(EdgeMap em) {
    if (em.finalized) throw Error(Errc::AlreadyFinalized, "edge map already finalized");
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < em.height; ++y)
        for (int x = 0; x < em.width; ++x)
            if (em.at(x, y) == EdgeClass::Strong) stack.emplace_back(x, y);
    while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= em.width || ny >= em.height) continue;
                if (em.at(nx, ny) == EdgeClass::Weak) {
                    em.at(nx, ny) = EdgeClass::Strong;
                    stack.emplace_back(nx, ny);
                }
            }
    }
    for (auto& c : em.classes)
        if (c == EdgeClass::Weak) c = EdgeClass::None;
    em.finalized = true;
    return em;
}

struct CannyParams {
    double sigma = 1.4;
    int kernel_radius = -1;  // < 0 means ceil(3 sigma)
    double low_threshold = 0.1;
    double high_threshold = 0.2;

    int radius() const noexcept {
        return kernel_radius >= 0 ? kernel_radius : static_cast<int>(std::ceil(3.0 * sigma));
    }
};

/// Binary edge map (values 0 or 1). RGB input is converted to luma first.
inline Image canny(const Image& img, const CannyParams& p = {}) {
    const Image gray = img.channels() == 3 ? to_grayscale(img) : img;
    if (gray.width() < 3 || gray.height() < 3) throw Error(Errc::ImageTooSmall, "canny needs at least 3x3");
    if (p.high_threshold > 1.0) throw Error(Errc::InvalidArgument, "high threshold must be <= 1");
    const Image smooth = convolve2d(gray, gaussian_kernel(p.sigma, p.radius()));
    const Image thin = non_max_suppression(sobel_gradients(smooth));
    return hysteresis_link(double_threshold(thin, p.low_threshold, p.high_threshold)).to_image();
}

}  // namespace earbio

#endif

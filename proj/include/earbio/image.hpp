#ifndef EARBIO_IMAGE_HPP
#define EARBIO_IMAGE_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "earbio/error.hpp"

namespace earbio {

/// Row-major H x W x C buffer of normalized reals in [0, 1].
/// channels == 1 is grayscale, channels == 3 is RGB.
class Image {
public:
    Image() = default;

    Image(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels) {
        validate_shape();
        data_.assign(size(), fill);
    }

    Image(int width, int height, int channels, std::vector<double> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != size()) {
            throw Error(Errc::ShapeMismatch, "pixel buffer length " + std::to_string(data_.size()) +
                                                 " != " + std::to_string(size()));
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept {
        return static_cast<std::size_t>(width_) * height_ * channels_;
    }
    bool empty() const noexcept { return data_.empty(); }
    bool is_gray() const noexcept { return channels_ == 1; }

    double& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

    /// Replicate-edge access.
    double clamped(int x, int y, int c = 0) const noexcept {
        x = std::clamp(x, 0, width_ - 1);
        y = std::clamp(y, 0, height_ - 1);
        return data_[index(x, y, c)];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Image& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    void validate_shape() const {
        if (width_ <= 0 || height_ <= 0) {
            throw Error(Errc::InvalidArgument, "image dimensions must be positive");
        }
        if (channels_ != 1 && channels_ != 3) {
            throw Error(Errc::InvalidArgument, "channels must be 1 or 3");
        }
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

struct PixelRect {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;

    bool fits(const Image& img) const noexcept {
        return x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= img.width() && y + h <= img.height();
    }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline double luma(double r, double g, double b) noexcept {
    return kLumaR * r + kLumaG * g + kLumaB * b;
}

/// BT.601 luma. Constant-colour pixels map to themselves exactly.
inline Image to_grayscale(const Image& img) {
    if (img.channels() == 1) throw Error(Errc::AlreadyGrayscale, "image is already single-channel");
    Image out(img.width(), img.height(), 1);
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
        // The weights sum to 1 - 2^-53 in doubles; R=G=B=c is special-cased so
        // grey pixels map to c exactly.
        dst[i] = (r == g && g == b) ? r : std::clamp(luma(r, g, b), 0.0, 1.0);
    }
    return out;
}

/// Grayscale to 3 channels by replication; RGB passes through.
inline Image to_rgb(const Image& img) {
    if (img.channels() == 3) return img;
    Image out(img.width(), img.height(), 3);
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
    }
    return out;
}

inline Image crop(const Image& img, const PixelRect& r) {
    if (!r.fits(img)) throw Error(Errc::OutOfBounds, "rectangle exceeds image bounds");
    Image out(r.w, r.h, img.channels());
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(r.x + x, r.y + y, c);
    return out;
}

}  // namespace earbio

#endif

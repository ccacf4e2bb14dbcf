#include <gtest/gtest.h>

#include "earbio/edge.hpp"
#include "earbio/geometry.hpp"
#include "test_support.hpp"

using namespace earbio;
using earbio::testing::max_abs_diff;
using earbio::testing::random_image;

namespace {

Image smooth_noise(int w, int h, std::uint64_t seed) {
    return convolve2d(random_image(w, h, 1, seed), gaussian_kernel(3.0, 9));
}

double interior_max_diff(const Image& a, const Image& b, int margin) {
    double m = 0.0;
    for (int y = margin; y < a.height() - margin; ++y)
        for (int x = margin; x < a.width() - margin; ++x)
            for (int c = 0; c < a.channels(); ++c) m = std::max(m, std::abs(a.at(x, y, c) - b.at(x, y, c)));
    return m;
}

// Straight-line bilinear reference: fill outside [-0.5, n - 0.5], clamp inside.
double ref_sample(const Image& img, double sx, double sy) {
    if (sx < -0.5 || sy < -0.5 || sx > img.width() - 0.5 || sy > img.height() - 0.5) return 0.0;
    sx = std::min(std::max(sx, 0.0), img.width() - 1.0);
    sy = std::min(std::max(sy, 0.0), img.height() - 1.0);
    const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
    const int x1 = x0 + 1 < img.width() ? x0 + 1 : x0;
    const int y1 = y0 + 1 < img.height() ? y0 + 1 : y0;
    const double ax = sx - x0, ay = sy - y0;
    const double top = img.at(x0, y0) + ax * (img.at(x1, y0) - img.at(x0, y0));
    const double bot = img.at(x0, y1) + ax * (img.at(x1, y1) - img.at(x0, y1));
    return top + ay * (bot - top);
}

}  // namespace

TEST(Resize, SameSizeIsIdentity) {
    const Image img = random_image(13, 9, 3, 1);
    EXPECT_LE(max_abs_diff(resize_bilinear(img, 13, 9), img), 1e-9);
}

TEST(Resize, ConstantStaysConstant) {
    const Image img(7, 5, 3, 0.42);
    for (auto [w, h] : {std::pair{1, 1}, {3, 11}, {20, 2}}) {
        const Image out = resize_bilinear(img, w, h);
        for (double v : out.data()) EXPECT_NEAR(v, 0.42, 1e-12);
    }
}

TEST(Resize, TwoPixelsToFourHalfPixelCentres) {
    const Image img(2, 1, 1, std::vector<double>{0.0, 1.0});
    const Image out = resize_bilinear(img, 4, 1);
    const double expected[] = {0.0, 0.25, 0.75, 1.0};
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(out.at(x, 0), expected[x], 1e-12);
    EXPECT_THROW(resize_bilinear(img, 0, 1), Error);
}

TEST(Zoom, AmiDefaultsGive320x490) {
    const Image img(492, 702, 3, 0.5);
    const Image out = zoom_crop(img);
    EXPECT_EQ(out.width(), 320);
    EXPECT_EQ(out.height(), 490);
    const PixelRect r = zoom_region(492, 702, ZoomSpec{});
    EXPECT_EQ(r.w, 320);
    EXPECT_EQ(r.h, 490);
    EXPECT_EQ(r.x, 86);
    EXPECT_EQ(r.y, 106);
}

TEST(Zoom, AmiCropIsIdentityScale) {
    const Image img = random_image(492, 702, 1, 3);
    const Image out = zoom_crop(img);
    for (int y = 0; y < 490; y += 7)
        for (int x = 0; x < 320; x += 5) ASSERT_EQ(out.at(x, y), img.at(86 + x, 106 + y));
}

TEST(Zoom, IdentitySpecIsBitExact) {
    const Image img = random_image(31, 17, 3, 4);
    EXPECT_EQ(zoom_crop(img, ZoomSpec::identity(31, 17)), img);
}

TEST(Zoom, QuarterMarginsTakeCentralBlock) {
    const Image img = random_image(100, 100, 1, 5);
    const Image out = zoom_crop(img, ZoomSpec{50, 50, 0.25, 0.25});
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 50; ++x) ASSERT_EQ(out.at(x, y), img.at(25 + x, 25 + y));
}

TEST(Zoom, InvalidSpecs) {
    const Image img(10, 10, 1);
    EXPECT_THROW(zoom_crop(img, ZoomSpec{5, 5, 0.5, 0.1}), Error);
    EXPECT_THROW(zoom_crop(img, ZoomSpec{5, 5, -0.1, 0.1}), Error);
    EXPECT_THROW(zoom_crop(img, ZoomSpec{0, 5, 0.1, 0.1}), Error);
}

TEST(WarpAffine, IdentityAndSingular) {
    const Image img = random_image(9, 8, 3, 6);
    EXPECT_LE(max_abs_diff(warp_affine(img, AffineMatrix::identity()), img), 1e-9);
    EXPECT_THROW(warp_affine(img, AffineMatrix{{1, 2, 0, 2, 4, 0}}), Error);
}

TEST(WarpAffine, IntegerTranslation) {
    const Image img = random_image(6, 5, 1, 7);
    // Output column x reads source column x - 1.
    const Image out = warp_affine(img, AffineMatrix{{1, 0, -1, 0, 1, 0}}, 0.3);
    for (int y = 0; y < 5; ++y) {
        EXPECT_EQ(out.at(0, y), 0.3);
        for (int x = 1; x < 6; ++x) EXPECT_NEAR(out.at(x, y), img.at(x - 1, y), 1e-12);
    }
}

TEST(WarpAffine, QuarterTurnMatchesArrayRotation) {
    for (int n : {4, 7}) {
        const Image img = random_image(n, n, 3, 8 + n);
        const double c = (n - 1) / 2.0;
        const Image out = warp_affine(img, make_rotation(90, c, c));
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(out.at(x, y, ch), img.at(y, n - 1 - x, ch), 1e-6);
    }
}

TEST(WarpAffine, RotationMatrices) {
    const AffineMatrix id = AffineMatrix::identity();
    EXPECT_EQ(make_rotation(0, 3.5, -2).m, id.m);
    const auto full = make_rotation(360, 10, 20);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(full.m[i], id.m[i], 1e-9);
    const auto a = make_rotation(37, 4, 5), b = make_rotation(-323, 4, 5);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a.m[i], b.m[i], 1e-12);
}

TEST(WarpAffine, FlipIsInvolution) {
    const Image img = random_image(8, 6, 3, 9);
    const auto f = make_flip_h(8);
    const Image once = warp_affine(img, f);
    EXPECT_EQ(once.at(0, 2, 1), img.at(7, 2, 1));
    EXPECT_LE(max_abs_diff(warp_affine(once, f), img), 1e-6);
}

TEST(WarpAffine, CropResizeMatchesCropThenResize) {
    const Image img = random_image(40, 30, 3, 10);
    const PixelRect r{5, 4, 24, 18};
    const Image a = warp_affine(img, make_crop_resize(r, 40, 30));
    const Image b = resize_bilinear(crop(img, r), 40, 30);
    // The outermost output ring samples just outside the rectangle: the warp
    // reads the neighbouring source pixels where the explicit crop clamps.
    EXPECT_LE(interior_max_diff(a, b, 1), 1e-9);
}

TEST(WarpAffine, CompositionOnSmoothImages) {
    const Image img = smooth_noise(64, 64, 11);
    const auto a = make_rotation(12, 31.5, 31.5);
    const auto b = AffineMatrix{{0.95, 0.05, 2.0, -0.03, 1.02, -1.0}};
    const Image two_step = warp_affine(warp_affine(img, a), b);
    const Image one_step = warp_affine(img, compose(a, b));
    EXPECT_LE(interior_max_diff(two_step, one_step, 12), 0.02);
}

TEST(WarpAffine, OutputStaysInRangeAndIsDeterministic) {
    const Image img = random_image(20, 20, 3, 12);
    const auto m = compose(make_rotation(33, 9, 11), AffineMatrix{{1.1, 0.2, -1, 0.1, 0.9, 2}});
    const Image out = warp_affine(img, m, 1.0);
    for (double v : out.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(out, warp_affine(img, m, 1.0));
}

TEST(WarpPerspective, IdentityAndAffineEmbedding) {
    const Image img = random_image(12, 10, 3, 13);
    EXPECT_LE(max_abs_diff(warp_perspective(img, PerspectiveMatrix::identity()), img), 1e-9);
    const auto a = make_rotation(17, 5, 4);
    EXPECT_LE(max_abs_diff(warp_perspective(img, PerspectiveMatrix::from_affine(a)), warp_affine(img, a)), 1e-9);
    EXPECT_THROW(warp_perspective(img, PerspectiveMatrix{{1, 0, 0, 0, 1, 0, 0, 0, 0}}), Error);
}

TEST(WarpPerspective, QuadToRectangleMatchesPerPixelProjection) {
    Image board(32, 32, 1);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) board.at(x, y) = ((x / 4 + y / 4) % 2) ? 1.0 : 0.0;
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        const std::array<std::array<double, 2>, 4> rect{{{0, 0}, {31, 0}, {31, 31}, {0, 31}}};
        std::array<std::array<double, 2>, 4> quad = rect;
        for (auto& p : quad) {
            p[0] += rng.uniform(-4, 4);
            p[1] += rng.uniform(-4, 4);
        }
        const auto h = homography_from_points(rect, quad);
        for (int i = 0; i < 4; ++i) {
            const double w = h.m[6] * rect[i][0] + h.m[7] * rect[i][1] + h.m[8];
            EXPECT_NEAR((h.m[0] * rect[i][0] + h.m[1] * rect[i][1] + h.m[2]) / w, quad[i][0], 1e-9);
            EXPECT_NEAR((h.m[3] * rect[i][0] + h.m[4] * rect[i][1] + h.m[5]) / w, quad[i][1], 1e-9);
        }
        const Image out = warp_perspective(board, h);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double u = h.m[0] * x + h.m[1] * y + h.m[2];
                const double v = h.m[3] * x + h.m[4] * y + h.m[5];
                const double w = h.m[6] * x + h.m[7] * y + h.m[8];
                ASSERT_NEAR(out.at(x, y), ref_sample(board, u / w, v / w), 1e-6);
            }
    }
}

TEST(Homography, DegeneratePointsRejected) {
    const std::array<std::array<double, 2>, 4> rect{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    const std::array<std::array<double, 2>, 4> line{{{0, 0}, {1, 1}, {2, 2}, {3, 3}}};
    EXPECT_THROW(homography_from_points(rect, line), Error);
}

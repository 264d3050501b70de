#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace dewarp {
namespace {

using testing::random_raster;
using testing::rel_error;

TEST(IdentityMap, PixelCenters) {
    const CoordMap m = identity_map(2, 2);
    EXPECT_EQ(m.at(0, 0), (Point2{0.25, 0.25}));
    EXPECT_EQ(m.at(1, 1), (Point2{0.75, 0.75}));
    const CoordMap r = identity_map(3, 5);
    EXPECT_DOUBLE_EQ(r.at(2, 4).x, 4.5 / 5);
    EXPECT_DOUBLE_EQ(r.at(2, 4).y, 2.5 / 3);
}

TEST(IdentityMap, RejectsTinyDimensions) {
    EXPECT_THROW(identity_map(1, 5), Error);
    EXPECT_THROW(identity_map(5, 0), Error);
}

TEST(SampleBilinear, ConstantRaster) {
    RasterF32 r(7, 9, 3, 0.625f);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (int i = 0; i < 100; ++i) {
        const auto v = sample_bilinear(r, {u(rng), u(rng)});
        ASSERT_EQ(v.size(), 3u);
        for (double c : v) EXPECT_NEAR(c, 0.625, 1e-12);
    }
}

TEST(SampleBilinear, HandEvaluatedTwoByTwo) {
    RasterF32 r(2, 2, 1);
    r.at(0, 1) = 1.0f;
    r.at(1, 1) = 1.0f;
    EXPECT_DOUBLE_EQ(sample_bilinear(r, {0.5, 0.5})[0], 0.5);
}

TEST(SampleBilinear, FarOutsideIsBackground) {
    const RasterF32 r = random_raster(5, 5, 1, 1);
    EXPECT_EQ(sample_bilinear(r, {-1.0, -1.0})[0], 0.0);
}

// Points more than one pixel outside touch no raster pixel and must return
// the fill exactly; everything else stays finite and within the value range.
TEST(SampleBilinear, OutOfRangeFuzz) {
    const RasterF32 r = random_raster(13, 11, 2, 9);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 20000; ++i) {
        const Point2 p{u(rng), u(rng)};
        const double px = p.x * r.width() - 0.5;
        const double py = p.y * r.height() - 0.5;
        const bool untouched = px <= -1.0 || py <= -1.0 || px >= r.width() || py >= r.height();
        const auto v = sample_bilinear(r, p);
        for (double c : v) {
            ASSERT_TRUE(std::isfinite(c));
            ASSERT_GE(c, 0.0);
            ASSERT_LE(c, 1.0);
            if (untouched) {
                ASSERT_EQ(c, 0.0);
            }
        }
        const SampleGrad g = sample_bilinear_grad(r, p);
        if (untouched) {
            for (int c = 0; c < 2; ++c) {
                ASSERT_EQ(g.value[c], 0.0);
                ASSERT_EQ(g.d_dx[c], 0.0);
                ASSERT_EQ(g.d_dy[c], 0.0);
            }
        }
    }
}

TEST(SampleBilinear, FillParameterIsUsed) {
    const RasterF32 r = random_raster(4, 4, 1, 2);
    EXPECT_EQ(sample_bilinear(r, {5.0, 5.0}, 1.0)[0], 1.0);
}

// f(px, py) = a px + b py + c sampled anywhere inside the outer pixel
// centres reproduces the plane.
TEST(SampleBilinear, ExactOnLinearFields) {
    const int h = 9;
    const int w = 12;
    const double a = 0.013;
    const double b = -0.021;
    const double c = 0.4;
    RasterF32 r(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) r.at(y, x) = static_cast<float>(a * x + b * y + c);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.5 / w, 1.0 - 0.5 / w);
    std::uniform_real_distribution<double> uy(0.5 / h, 1.0 - 0.5 / h);
    for (int i = 0; i < 1000; ++i) {
        const Point2 p{ux(rng), uy(rng)};
        const double px = p.x * w - 0.5;
        const double py = p.y * h - 0.5;
        EXPECT_NEAR(sample_bilinear(r, p)[0], a * px + b * py + c, 1e-6);
    }
}

TEST(SampleBilinearGrad, ConstantRasterHasZeroDerivative) {
    RasterF32 r(6, 6, 1, 0.3f);
    const SampleGrad g = sample_bilinear_grad(r, {0.42, 0.57});
    EXPECT_EQ(g.d_dx[0], 0.0);
    EXPECT_EQ(g.d_dy[0], 0.0);
}

TEST(SampleBilinearGrad, LinearRampSlopeOne) {
    const int w = 16;
    RasterF32 r(4, w, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < w; ++x) r.at(y, x) = static_cast<float>((x + 0.5) / w);
    for (double x : {0.1, 0.33, 0.5, 0.77, 0.9}) {
        const SampleGrad g = sample_bilinear_grad(r, {x, 0.5});
        EXPECT_NEAR(g.d_dx[0], 1.0, 1e-6);
        EXPECT_NEAR(g.d_dy[0], 0.0, 1e-6);
    }
}

// Central differences at random interior points. Points are kept away from
// cell boundaries by more than eps so both probes see the same cell.
TEST(SampleBilinearGrad, MatchesFiniteDifferences) {
    const RasterF32 r = random_raster(8, 8, 2, 44);
    const double eps = 1e-4;
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(0.5 / 8, 1.0 - 0.5 / 8);
    int checked = 0;
    while (checked < 1000) {
        const Point2 p{u(rng), u(rng)};
        const double fx = p.x * 8 - 0.5 - std::floor(p.x * 8 - 0.5);
        const double fy = p.y * 8 - 0.5 - std::floor(p.y * 8 - 0.5);
        const double guard = 2 * eps * 8;
        if (fx < guard || fx > 1 - guard || fy < guard || fy > 1 - guard) continue;
        const SampleGrad g = sample_bilinear_grad(r, p);
        for (int c = 0; c < 2; ++c) {
            const double nx =
                (sample_bilinear(r, {p.x + eps, p.y})[c] - sample_bilinear(r, {p.x - eps, p.y})[c]) / (2 * eps);
            const double ny =
                (sample_bilinear(r, {p.x, p.y + eps})[c] - sample_bilinear(r, {p.x, p.y - eps})[c]) / (2 * eps);
            ASSERT_LT(rel_error(g.d_dx[c], nx), 1e-4);
            ASSERT_LT(rel_error(g.d_dy[c], ny), 1e-4);
        }
        ++checked;
    }
}

// On a pixel centre the derivative comes from the cell below (left/up).
TEST(SampleBilinearGrad, TieBreakUsesLowerCell) {
    RasterF32 r(1, 4, 1);
    r.at(0, 0) = 0.0f;
    r.at(0, 1) = 1.0f;
    r.at(0, 2) = 3.0f;
    r.at(0, 3) = 6.0f;
    const SampleGrad g = sample_bilinear_grad(r, {2.5 / 4, 0.5});
    EXPECT_DOUBLE_EQ(g.value[0], 3.0);
    EXPECT_DOUBLE_EQ(g.d_dx[0], (3.0 - 1.0) * 4);
}

TEST(GridSample, IdentityReproducesImage) {
    const RasterF32 r = random_raster(17, 23, 3, 8);
    const RasterF32 out = grid_sample(r, identity_map(17, 23));
    ASSERT_TRUE(out.same_shape(r));
    for (std::size_t i = 0; i < r.data().size(); ++i) EXPECT_NEAR(out.data()[i], r.data()[i], 1e-6);
}

TEST(GridSample, OutsideMapGivesZeros) {
    RasterF32 ones(10, 10, 1, 1.0f);
    CoordMap m(6, 6, MapKind::Backward);
    for (int v = 0; v < 6; ++v)
        for (int u = 0; u < 6; ++u) m.set(v, u, {2.0 + u, -3.0 - v});
    const RasterF32 out = grid_sample(ones, m);
    for (float x : out.data()) EXPECT_EQ(x, 0.0f);
}

TEST(GridSample, RequiresBackwardMap) {
    const RasterF32 r = random_raster(4, 4, 1, 1);
    EXPECT_THROW(grid_sample(r, identity_map(4, 4, MapKind::Forward)), Error);
    EXPECT_NO_THROW(sample_through(r, identity_map(4, 4, MapKind::Forward)));
}

CoordMap random_smooth_map(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.03, 0.03);
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    CoordMap m(h, w, MapKind::Backward);
    for (int v = 0; v < h; ++v) {
        for (int x = 0; x < w; ++x) {
            const double px = (x + 0.5) / w;
            const double py = (v + 0.5) / h;
            m.set(v, x, {px + a * std::sin(3 * py) + b, py + c * std::cos(2 * px) + d});
        }
    }
    return m;
}

TEST(ComposeMaps, IdentityOuterReturnsInner) {
    const CoordMap inner = random_smooth_map(20, 20, 3);
    const ComposedMap c = compose_maps(identity_map(20, 20, MapKind::Forward), inner);
    for (std::size_t i = 0; i < inner.coords().size(); ++i) {
        EXPECT_NEAR(c.map.coords()[i], inner.coords()[i], 1e-12);
    }
}

TEST(ComposeMaps, IdentityInnerReturnsOuter) {
    const CoordMap outer = random_smooth_map(16, 16, 4);
    const ComposedMap c = compose_maps(outer, identity_map(16, 16));
    for (std::size_t i = 0; i < outer.coords().size(); ++i) {
        EXPECT_NEAR(c.map.coords()[i], outer.coords()[i], 1e-12);
    }
}

TEST(ComposeMaps, OutOfDomainPointIsInvalid) {
    const CoordMap outer = random_smooth_map(8, 8, 5);
    const std::vector<Point2> pts{{-2.0, -2.0}, {0.5, 0.5}, {1.0, 1.0}};
    const ComposedPoints c = compose_maps(outer, pts);
    ASSERT_EQ(c.valid.size(), 3u);
    EXPECT_EQ(c.valid[0], 0);
    EXPECT_EQ(c.valid[1], 1);
    EXPECT_EQ(c.valid[2], 1);
    EXPECT_TRUE(std::isfinite(c.points[0].x));
}

TEST(InvertMap, IdentityIsFixed) {
    const InversionResult r = invert_map(identity_map(12, 12));
    EXPECT_EQ(r.inverse.kind(), MapKind::Forward);
    const CoordMap id = identity_map(12, 12);
    for (std::size_t i = 0; i < id.coords().size(); ++i) EXPECT_NEAR(r.inverse.coords()[i], id.coords()[i], 1e-6);
}

TEST(InvertMap, TranslationHasAnalyticInverse) {
    CoordMap m = identity_map(32, 32);
    for (std::size_t i = 0; i < m.coords().size(); i += 2) m.coords()[i] += 0.1;
    const InversionResult r = invert_map(m);
    const CoordMap id = identity_map(32, 32);
    for (std::size_t i = 0; i < id.coords().size(); ++i) {
        const double expected = id.coords()[i] - (i % 2 == 0 ? 0.1 : 0.0);
        EXPECT_NEAR(r.inverse.coords()[i], expected, 1e-5);
    }
}

TEST(InvertMap, SmoothMapRoundTrip) {
    const CoordMap m = random_smooth_map(64, 64, 9);
    const InversionResult r = invert_map(m);
    EXPECT_LT(r.mean_residual_px, 0.05);
    const ComposedMap back = compose_maps(r.inverse, m);
    const CoordMap id = identity_map(64, 64);
    double worst = 0.0;
    for (int v = 4; v < 60; ++v) {
        for (int u = 4; u < 60; ++u) {
            const Point2 a = back.map.at(v, u);
            const Point2 b = id.at(v, u);
            worst = std::max(worst, std::hypot((a.x - b.x) * 64, (a.y - b.y) * 64));
        }
    }
    EXPECT_LT(worst, 0.1);
}

TEST(GaussianBlur, SigmaZeroCopies) {
    const RasterF32 r = random_raster(9, 7, 3, 11);
    const RasterF32 out = gaussian_blur(r, 0.0);
    for (std::size_t i = 0; i < r.data().size(); ++i) EXPECT_EQ(out.data()[i], r.data()[i]);
}

TEST(GaussianBlur, ConstantUnchanged) {
    RasterF32 r(20, 20, 1, 0.37f);
    const RasterF32 out = gaussian_blur(r, 2.3);
    for (float v : out.data()) EXPECT_NEAR(v, 0.37, 1e-6);
}

TEST(GaussianBlur, ImpulseCenterIsKernelCenter) {
    RasterF32 r(21, 21, 1);
    r.at(10, 10) = 1.0f;
    const RasterF32 out = gaussian_blur(r, 1.0);
    // Direct 1-D taps: exp(-i^2/2) for |i| <= 3, normalized.
    double sum = 0.0;
    for (int i = -3; i <= 3; ++i) sum += std::exp(-0.5 * i * i);
    const double center = 1.0 / sum;
    EXPECT_NEAR(out.at(10, 10), center * center, 1e-7);
}

TEST(GaussianBlur, KernelRadiusAndNormalization) {
    const std::vector<double> k = gaussian_kernel(1.5);
    EXPECT_EQ(k.size(), 11u);
    double s = 0.0;
    for (double v : k) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(GaussianBlur, NegativeSigmaRejected) {
    const RasterF32 r = random_raster(4, 4, 1, 1);
    try {
        gaussian_blur(r, -0.5);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
}

TEST(GradientMagnitude, ConstantIsZero) {
    RasterF32 r(8, 8, 3, 0.5f);
    const RasterF32 g = gradient_magnitude(r);
    for (float v : g.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GradientMagnitude, StepEdgeIsLocal) {
    RasterF32 r(10, 20, 1);
    for (int y = 0; y < 10; ++y)
        for (int x = 10; x < 20; ++x) r.at(y, x) = 1.0f;
    const RasterF32 g = gradient_magnitude(r);
    for (int y = 0; y < 10; ++y) {
        EXPECT_FLOAT_EQ(g.at(y, 9), 0.5f);
        EXPECT_FLOAT_EQ(g.at(y, 10), 0.5f);
        EXPECT_EQ(g.at(y, 3), 0.0f);
        EXPECT_EQ(g.at(y, 16), 0.0f);
    }
}

TEST(GradientMagnitude, RampIsUniform) {
    const double s = 0.01;
    RasterF32 r(12, 30, 1);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 30; ++x) r.at(y, x) = static_cast<float>(0.1 + s * x);
    const RasterF32 g = gradient_magnitude(r);
    for (int y = 1; y < 11; ++y)
        for (int x = 1; x < 29; ++x) EXPECT_NEAR(g.at(y, x), s, 1e-6);
}

TEST(ToLuma, Rec601Weights) {
    RasterF32 r(1, 1, 3);
    r.at(0, 0, 0) = 1.0f;
    r.at(0, 0, 1) = 0.5f;
    r.at(0, 0, 2) = 0.25f;
    EXPECT_NEAR(to_luma(r).at(0, 0), 0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-6);
}

TEST(ResizeBilinear, SameSizeAndConstant) {
    const RasterF32 r = random_raster(9, 9, 1, 3);
    const RasterF32 same = resize_bilinear(r, 9, 9);
    for (std::size_t i = 0; i < r.data().size(); ++i) EXPECT_NEAR(same.data()[i], r.data()[i], 1e-6);
    RasterF32 c(5, 7, 3, 0.8f);
    const RasterF32 big = resize_bilinear(c, 13, 4);
    for (float v : big.data()) EXPECT_NEAR(v, 0.8, 1e-6);
}

}  // namespace
}  // namespace dewarp

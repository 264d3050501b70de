#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/raster.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dewarp {

/// Pixel-center identity: pixel (u,v) -> ((u+0.5)/width, (v+0.5)/height).
CoordMap identity_map(int height, int width, MapKind kind = MapKind::Backward);

/// Bilinear sample at normalized p. Neighbours outside the raster read
/// `fill`, so values fade to `fill` over the outermost half pixel.
std::vector<double> sample_bilinear(const RasterF32& raster, Point2 p, double fill = 0.0);

struct SampleGrad {
    std::vector<double> value;
    std::vector<double> d_dx;  // derivative w.r.t. normalized x
    std::vector<double> d_dy;  // derivative w.r.t. normalized y
};

/// Value and analytic derivatives of sample_bilinear. On a cell boundary the
/// lower-indexed cell supplies the derivative.
SampleGrad sample_bilinear_grad(const RasterF32& raster, Point2 p, double fill = 0.0);

/// Bilinear interpolation weights of a coordinate field at p. The cell is
/// clamped to the field, so points in the outer half pixel (or beyond) are
/// linearly extrapolated from the nearest cell.
struct FieldStencil {
    std::array<std::size_t, 4> node{};   // pixel indices (row-major) of the 4 corners
    std::array<double, 4> weight{};      // interpolation weights, sum to 1
    std::array<double, 4> d_dx{};        // d weight / d p.x (normalized)
    std::array<double, 4> d_dy{};        // d weight / d p.y (normalized)
};

FieldStencil field_stencil(int height, int width, Point2 p) noexcept;

/// Sample a coordinate map at p using field_stencil.
Point2 sample_coords(const CoordMap& map, Point2 p) noexcept;

/// Sample with the 2x2 Jacobian d(value)/d(p): {dvx/dpx, dvx/dpy, dvy/dpx, dvy/dpy}.
Point2 sample_coords_jacobian(const CoordMap& map, Point2 p, std::array<double, 4>& jac) noexcept;

inline bool inside_unit_square(Point2 p) noexcept {
    return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
}

/// Output pixel (u,v) = sample_bilinear(raster, map(u,v), fill). Requires a backward map.
RasterF32 grid_sample(const RasterF32& raster, const CoordMap& map, double fill = 0.0);

/// Same as grid_sample but accepts either map kind; the map is read purely as
/// a field of sampling locations.
RasterF32 sample_through(const RasterF32& raster, const CoordMap& map, double fill = 0.0);

struct ComposedPoints {
    std::vector<Point2> points;
    std::vector<std::uint8_t> valid;
};

struct ComposedMap {
    CoordMap map;
    std::vector<std::uint8_t> valid;  // per pixel
};

/// result(i) = outer sampled at inner(i). Entries whose inner value falls
/// outside [0,1]^2 are flagged invalid (the value is still extrapolated).
ComposedPoints compose_maps(const CoordMap& outer, std::span<const Point2> inner);
ComposedMap compose_maps(const CoordMap& outer, const CoordMap& inner);

struct InversionResult {
    CoordMap inverse;
    double mean_residual_px = 0.0;
    double max_residual_px = 0.0;
};

inline constexpr int kDefaultInversionIterations = 30;

/// Fixed-point inversion q <- q - damping * (map(q) - target), starting at the
/// identity. The inverse is sampled on an out_height x out_width grid
/// (defaults to the map's own size) and has the flipped kind. Residuals are
/// measured in output pixels.
InversionResult invert_map(const CoordMap& map, int iterations = kDefaultInversionIterations,
                           double damping = 1.0, int out_height = 0, int out_width = 0);

/// Separable Gaussian, radius ceil(3 sigma), clamped borders. sigma == 0 copies.
RasterF32 gaussian_blur(const RasterF32& raster, double sigma);

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Rec. 601 luma for 3-channel input; single-channel input is copied.
RasterF32 to_luma(const RasterF32& raster);

/// Central-difference gradient magnitude of the luma, replicated borders.
RasterF32 gradient_magnitude(const RasterF32& raster);

/// Bilinear resize with clamped borders.
RasterF32 resize_bilinear(const RasterF32& raster, int height, int width);

}  // namespace dewarp

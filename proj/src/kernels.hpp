#pragma once

// Inline sampling kernels shared by the parallel implementation and the
// serial reference path.

#include "dewarp/raster.hpp"

#include <algorithm>
#include <cmath>

namespace dewarp::detail {

/// Bilinear cell in pixel space. fx, fy lie in (0, 1]; an exact integer
/// position resolves to the lower-indexed cell.
struct Cell {
    int x0 = 0;
    int y0 = 0;
    double fx = 0.0;
    double fy = 0.0;
};

/// Continuous pixel position of a normalized coordinate (pixel centers on integers).
inline double to_pixel(double normalized, int size) noexcept {
    return normalized * size - 0.5;
}

/// False when every neighbour lies outside the raster (or the position is NaN).
inline bool touches_raster(double px, double py, int width, int height) noexcept {
    return px > -1.0 && px < width && py > -1.0 && py < height;
}

inline Cell lower_cell(double px, double py) noexcept {
    Cell c;
    c.x0 = static_cast<int>(std::ceil(px)) - 1;
    c.y0 = static_cast<int>(std::ceil(py)) - 1;
    c.fx = px - c.x0;
    c.fy = py - c.y0;
    return c;
}

inline double fetch(const RasterF32& r, int y, int x, int ch, double fill) noexcept {
    if (x < 0 || y < 0 || x >= r.width() || y >= r.height()) return fill;
    return r.at(y, x, ch);
}

/// Bilinear value of one channel with constant fill outside the raster.
inline double bilinear_fill(const RasterF32& r, double px, double py, int ch, double fill) noexcept {
    if (!touches_raster(px, py, r.width(), r.height())) return fill;
    const Cell c = lower_cell(px, py);
    const double v00 = fetch(r, c.y0, c.x0, ch, fill);
    const double v10 = fetch(r, c.y0, c.x0 + 1, ch, fill);
    const double v01 = fetch(r, c.y0 + 1, c.x0, ch, fill);
    const double v11 = fetch(r, c.y0 + 1, c.x0 + 1, ch, fill);
    return (1.0 - c.fy) * ((1.0 - c.fx) * v00 + c.fx * v10) + c.fy * ((1.0 - c.fx) * v01 + c.fx * v11);
}

/// Value and pixel-space derivatives of one channel.
inline double bilinear_fill_grad(const RasterF32& r, double px, double py, int ch, double fill,
                                 double& d_px, double& d_py) noexcept {
    if (!touches_raster(px, py, r.width(), r.height())) {
        d_px = 0.0;
        d_py = 0.0;
        return fill;
    }
    const Cell c = lower_cell(px, py);
    const double v00 = fetch(r, c.y0, c.x0, ch, fill);
    const double v10 = fetch(r, c.y0, c.x0 + 1, ch, fill);
    const double v01 = fetch(r, c.y0 + 1, c.x0, ch, fill);
    const double v11 = fetch(r, c.y0 + 1, c.x0 + 1, ch, fill);
    d_px = (1.0 - c.fy) * (v10 - v00) + c.fy * (v11 - v01);
    d_py = (1.0 - c.fx) * (v01 - v00) + c.fx * (v11 - v10);
    return (1.0 - c.fy) * ((1.0 - c.fx) * v00 + c.fx * v10) + c.fy * ((1.0 - c.fx) * v01 + c.fx * v11);
}

/// Bilinear value with clamped borders (used for resizing).
inline double bilinear_clamp(const RasterF32& r, double px, double py, int ch) noexcept {
    px = std::clamp(px, 0.0, static_cast<double>(r.width() - 1));
    py = std::clamp(py, 0.0, static_cast<double>(r.height() - 1));
    const int x0 = std::min(static_cast<int>(px), std::max(r.width() - 2, 0));
    const int y0 = std::min(static_cast<int>(py), std::max(r.height() - 2, 0));
    const int x1 = std::min(x0 + 1, r.width() - 1);
    const int y1 = std::min(y0 + 1, r.height() - 1);
    const double fx = px - x0;
    const double fy = py - y0;
    const double v00 = r.at(y0, x0, ch);
    const double v10 = r.at(y0, x1, ch);
    const double v01 = r.at(y1, x0, ch);
    const double v11 = r.at(y1, x1, ch);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

}  // namespace dewarp::detail

#include "dewarp/reference.hpp"

#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dewarp::reference {

namespace {

double pixel_or(const RasterF32& r, int y, int x, int c, double fill) {
    if (y < 0 || x < 0 || y >= r.height() || x >= r.width()) return fill;
    return r.at(y, x, c);
}

struct Bilinear {
    double value = 0.0;
    double d_px = 0.0;
    double d_py = 0.0;
};

// Bilinear read with constant fill; an exact integer position uses the cell
// to its lower-left so boundary derivatives match the production kernel.
Bilinear bilinear(const RasterF32& r, double px, double py, int c, double fill) {
    if (!(px > -1.0 && px < r.width() && py > -1.0 && py < r.height())) return {fill, 0.0, 0.0};
    int x0 = static_cast<int>(std::floor(px));
    int y0 = static_cast<int>(std::floor(py));
    if (x0 == px) --x0;
    if (y0 == py) --y0;
    const double fx = px - x0;
    const double fy = py - y0;
    const double a = pixel_or(r, y0, x0, c, fill);
    const double b = pixel_or(r, y0, x0 + 1, c, fill);
    const double d = pixel_or(r, y0 + 1, x0, c, fill);
    const double e = pixel_or(r, y0 + 1, x0 + 1, c, fill);
    Bilinear out;
    out.value = a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + d * (1 - fx) * fy + e * fx * fy;
    out.d_px = (b - a) * (1 - fy) + (e - d) * fy;
    out.d_py = (d - a) * (1 - fx) + (e - b) * fx;
    return out;
}

// Linear interpolation weight of lattice node n for pixel p on one axis.
double hat(int p, int pixels, int n, int nodes) {
    const double g = (p + 0.5) / pixels * (nodes - 1);
    return std::max(0.0, 1.0 - std::abs(g - n));
}

}  // namespace

RasterF32 grid_sample(const RasterF32& raster, const CoordMap& map, double fill) {
    RasterF32 out(map.height(), map.width(), raster.channels());
    for (int v = 0; v < map.height(); ++v) {
        for (int u = 0; u < map.width(); ++u) {
            const Point2 p = map.at(v, u);
            for (int c = 0; c < raster.channels(); ++c) {
                const double px = p.x * raster.width() - 0.5;
                const double py = p.y * raster.height() - 0.5;
                out.at(v, u, c) = static_cast<float>(bilinear(raster, px, py, c, fill).value);
            }
        }
    }
    return out;
}

RasterF32 gaussian_blur(const RasterF32& raster, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int h = raster.height();
    const int w = raster.width();
    RasterF32 out(h, w, raster.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < raster.channels(); ++c) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j) {
                    for (int i = -r; i <= r; ++i) {
                        const int ys = std::clamp(y + j, 0, h - 1);
                        const int xs = std::clamp(x + i, 0, w - 1);
                        acc += k[j + r] * k[i + r] * raster.at(ys, xs, c);
                    }
                }
                out.at(y, x, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

RasterF32 gradient_magnitude(const RasterF32& raster) {
    const int h = raster.height();
    const int w = raster.width();
    const auto luma = [&](int y, int x) {
        y = std::clamp(y, 0, h - 1);
        x = std::clamp(x, 0, w - 1);
        if (raster.channels() == 1) return static_cast<double>(raster.at(y, x));
        return static_cast<double>(static_cast<float>(0.299 * raster.at(y, x, 0) + 0.587 * raster.at(y, x, 1) +
                                                      0.114 * raster.at(y, x, 2)));
    };
    RasterF32 out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (luma(y, x + 1) - luma(y, x - 1)) / 2.0;
            const double gy = (luma(y + 1, x) - luma(y - 1, x)) / 2.0;
            out.at(y, x) = static_cast<float>(std::hypot(gx, gy));
        }
    }
    return out;
}

TermValue loss_margin(const CoordMap& z_p, const RasterF32& background_soft, const RasterF32& m_gt) {
    const int h = z_p.height();
    const int w = z_p.width();
    const double n = static_cast<double>(h) * w;
    TermValue out{0.0, VectorField(h, w)};
    double total = 0.0;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const Point2 p = z_p.at(v, u);
            const Bilinear s = bilinear(background_soft, p.x * background_soft.width() - 0.5,
                                        p.y * background_soft.height() - 0.5, 0, 1.0);
            const double diff = s.value - m_gt.at(v, u);
            total += std::abs(diff);
            const double sg = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            const std::size_t i = (static_cast<std::size_t>(v) * w + u) * 2;
            out.grad.values[i] = sg * s.d_px * background_soft.width() / n;
            out.grad.values[i + 1] = sg * s.d_py * background_soft.height() / n;
        }
    }
    out.value = total / n;
    return out;
}

CoordMap expand(const ControlGrid& grid, int height, int width) {
    if (grid.rows < 2 || grid.cols < 2) fail(ErrorCode::InvalidArgument, "control grid needs at least 2x2 nodes");
    CoordMap map(height, width, MapKind::Backward);
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            double dx = 0.0;
            double dy = 0.0;
            for (int i = 0; i < grid.rows; ++i) {
                const double wy = hat(v, height, i, grid.rows);
                if (wy == 0.0) continue;
                for (int j = 0; j < grid.cols; ++j) {
                    const double wt = wy * hat(u, width, j, grid.cols);
                    const std::size_t a = (static_cast<std::size_t>(i) * grid.cols + j) * 2;
                    dx += wt * grid.offsets[a];
                    dy += wt * grid.offsets[a + 1];
                }
            }
            map.set(v, u, {(u + 0.5) / width + dx, (v + 0.5) / height + dy});
        }
    }
    return map;
}

std::vector<double> expand_adjoint(const ControlGrid& grid, const VectorField& g) {
    std::vector<double> out(grid.offsets.size(), 0.0);
    for (int v = 0; v < g.height; ++v) {
        for (int u = 0; u < g.width; ++u) {
            const std::size_t k = (static_cast<std::size_t>(v) * g.width + u) * 2;
            for (int i = 0; i < grid.rows; ++i) {
                const double wy = hat(v, g.height, i, grid.rows);
                if (wy == 0.0) continue;
                for (int j = 0; j < grid.cols; ++j) {
                    const double wt = wy * hat(u, g.width, j, grid.cols);
                    const std::size_t a = (static_cast<std::size_t>(i) * grid.cols + j) * 2;
                    out[a] += wt * g.values[k];
                    out[a + 1] += wt * g.values[k + 1];
                }
            }
        }
    }
    return out;
}

}  // namespace dewarp::reference

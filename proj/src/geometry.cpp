#include "dewarp/geometry.hpp"

#include "dewarp/error.hpp"
#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dewarp {

using detail::to_pixel;

CoordMap identity_map(int height, int width, MapKind kind) {
    if (height < 2 || width < 2) {
        fail(ErrorCode::InvalidDimension, "identity_map needs height, width >= 2");
    }
    CoordMap map(height, width, kind);
    auto c = map.coords();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < height; ++v) {
        const double y = (v + 0.5) / height;
        for (int u = 0; u < width; ++u) {
            const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 2;
            c[i] = (u + 0.5) / width;
            c[i + 1] = y;
        }
    }
    return map;
}

std::vector<double> sample_bilinear(const RasterF32& raster, Point2 p, double fill) {
    const double px = to_pixel(p.x, raster.width());
    const double py = to_pixel(p.y, raster.height());
    std::vector<double> out(static_cast<std::size_t>(raster.channels()));
    for (int ch = 0; ch < raster.channels(); ++ch) {
        out[ch] = detail::bilinear_fill(raster, px, py, ch, fill);
    }
    return out;
}

SampleGrad sample_bilinear_grad(const RasterF32& raster, Point2 p, double fill) {
    const double px = to_pixel(p.x, raster.width());
    const double py = to_pixel(p.y, raster.height());
    const auto n = static_cast<std::size_t>(raster.channels());
    SampleGrad g{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    for (int ch = 0; ch < raster.channels(); ++ch) {
        double dpx = 0.0;
        double dpy = 0.0;
        g.value[ch] = detail::bilinear_fill_grad(raster, px, py, ch, fill, dpx, dpy);
        g.d_dx[ch] = dpx * raster.width();
        g.d_dy[ch] = dpy * raster.height();
    }
    return g;
}

FieldStencil field_stencil(int height, int width, Point2 p) noexcept {
    // Bound the position so the integer conversion below is always defined;
    // anything this far out is extrapolated from the border cell anyway.
    const double px = std::clamp(to_pixel(p.x, width), -1e7, 1e7);
    const double py = std::clamp(to_pixel(p.y, height), -1e7, 1e7);
    const int x0 = std::clamp(static_cast<int>(std::ceil(px)) - 1, 0, width - 2);
    const int y0 = std::clamp(static_cast<int>(std::ceil(py)) - 1, 0, height - 2);
    const double fx = px - x0;
    const double fy = py - y0;

    FieldStencil s;
    const auto base = static_cast<std::size_t>(y0) * width + x0;
    s.node = {base, base + 1, base + width, base + width + 1};
    s.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    const double w = width;
    const double h = height;
    s.d_dx = {-(1.0 - fy) * w, (1.0 - fy) * w, -fy * w, fy * w};
    s.d_dy = {-(1.0 - fx) * h, -fx * h, (1.0 - fx) * h, fx * h};
    return s;
}

Point2 sample_coords(const CoordMap& map, Point2 p) noexcept {
    const FieldStencil s = field_stencil(map.height(), map.width(), p);
    const auto c = map.coords();
    Point2 out;
    for (int k = 0; k < 4; ++k) {
        out.x += s.weight[k] * c[s.node[k] * 2];
        out.y += s.weight[k] * c[s.node[k] * 2 + 1];
    }
    return out;
}

Point2 sample_coords_jacobian(const CoordMap& map, Point2 p, std::array<double, 4>& jac) noexcept {
    const FieldStencil s = field_stencil(map.height(), map.width(), p);
    const auto c = map.coords();
    Point2 out;
    jac = {0.0, 0.0, 0.0, 0.0};
    for (int k = 0; k < 4; ++k) {
        const double vx = c[s.node[k] * 2];
        const double vy = c[s.node[k] * 2 + 1];
        out.x += s.weight[k] * vx;
        out.y += s.weight[k] * vy;
        jac[0] += s.d_dx[k] * vx;
        jac[1] += s.d_dy[k] * vx;
        jac[2] += s.d_dx[k] * vy;
        jac[3] += s.d_dy[k] * vy;
    }
    return out;
}

RasterF32 sample_through(const RasterF32& raster, const CoordMap& map, double fill) {
    RasterF32 out(map.height(), map.width(), raster.channels());
    const auto c = map.coords();
    const int channels = raster.channels();
    const int w = map.width();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < map.height(); ++v) {
        auto row = out.row(v);
        for (int u = 0; u < w; ++u) {
            const std::size_t i = (static_cast<std::size_t>(v) * w + u) * 2;
            const double px = to_pixel(c[i], raster.width());
            const double py = to_pixel(c[i + 1], raster.height());
            for (int ch = 0; ch < channels; ++ch) {
                row[static_cast<std::size_t>(u) * channels + ch] =
                    static_cast<float>(detail::bilinear_fill(raster, px, py, ch, fill));
            }
        }
    }
    return out;
}

RasterF32 grid_sample(const RasterF32& raster, const CoordMap& map, double fill) {
    if (map.kind() != MapKind::Backward) {
        fail(ErrorCode::InvalidArgument, "grid_sample requires a backward map");
    }
    return sample_through(raster, map, fill);
}

ComposedPoints compose_maps(const CoordMap& outer, std::span<const Point2> inner) {
    ComposedPoints out;
    out.points.resize(inner.size());
    out.valid.resize(inner.size());
    for (std::size_t i = 0; i < inner.size(); ++i) {
        out.points[i] = sample_coords(outer, inner[i]);
        out.valid[i] = inside_unit_square(inner[i]) ? 1 : 0;
    }
    return out;
}

ComposedMap compose_maps(const CoordMap& outer, const CoordMap& inner) {
    ComposedMap out{CoordMap(inner.height(), inner.width(), inner.kind()),
                    std::vector<std::uint8_t>(inner.pixel_count())};
    const auto src = inner.coords();
    auto dst = out.map.coords();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < inner.height(); ++v) {
        for (int u = 0; u < inner.width(); ++u) {
            const std::size_t i = static_cast<std::size_t>(v) * inner.width() + u;
            const Point2 q{src[2 * i], src[2 * i + 1]};
            const Point2 r = sample_coords(outer, q);
            dst[2 * i] = r.x;
            dst[2 * i + 1] = r.y;
            out.valid[i] = inside_unit_square(q) ? 1 : 0;
        }
    }
    return out;
}

InversionResult invert_map(const CoordMap& map, int iterations, double damping, int out_height,
                           int out_width) {
    if (iterations < 0) fail(ErrorCode::InvalidArgument, "invert_map: negative iteration count");
    if (!(damping > 0.0)) fail(ErrorCode::InvalidArgument, "invert_map: damping must be positive");
    const int oh = out_height > 0 ? out_height : map.height();
    const int ow = out_width > 0 ? out_width : map.width();

    InversionResult result{CoordMap(oh, ow, flipped(map.kind())), 0.0, 0.0};
    auto dst = result.inverse.coords();
    std::vector<double> row_sum(static_cast<std::size_t>(oh), 0.0);
    std::vector<double> row_max(static_cast<std::size_t>(oh), 0.0);

#pragma omp parallel for schedule(static)
    for (int v = 0; v < oh; ++v) {
        const double ty = (v + 0.5) / oh;
        for (int u = 0; u < ow; ++u) {
            const double tx = (u + 0.5) / ow;
            Point2 q{tx, ty};
            for (int it = 0; it < iterations; ++it) {
                const Point2 m = sample_coords(map, q);
                q.x -= damping * (m.x - tx);
                q.y -= damping * (m.y - ty);
            }
            const Point2 m = sample_coords(map, q);
            const double res = std::hypot((m.x - tx) * ow, (m.y - ty) * oh);
            row_sum[v] += res;
            row_max[v] = std::max(row_max[v], res);
            const std::size_t i = (static_cast<std::size_t>(v) * ow + u) * 2;
            dst[i] = q.x;
            dst[i + 1] = q.y;
        }
    }
    double total = 0.0;
    for (int v = 0; v < oh; ++v) {
        total += row_sum[v];
        result.max_residual_px = std::max(result.max_residual_px, row_max[v]);
    }
    result.mean_residual_px = total / (static_cast<double>(oh) * ow);
    return result;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "gaussian sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    }
    const double total = std::accumulate(k.begin(), k.end(), 0.0);
    for (double& t : k) t /= total;
    return k;
}

RasterF32 gaussian_blur(const RasterF32& raster, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    if (k.size() == 1) return raster;
    const int radius = static_cast<int>(k.size() / 2);
    const int h = raster.height();
    const int w = raster.width();
    const int nc = raster.channels();
    std::vector<double> tmp(static_cast<std::size_t>(h) * w * nc);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < nc; ++ch) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    const int xs = std::clamp(x + t, 0, w - 1);
                    acc += k[t + radius] * raster.at(y, xs, ch);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * nc + ch] = acc;
            }
        }
    }

    RasterF32 out(h, w, nc);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < nc; ++ch) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    const int ys = std::clamp(y + t, 0, h - 1);
                    acc += k[t + radius] * tmp[(static_cast<std::size_t>(ys) * w + x) * nc + ch];
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

RasterF32 to_luma(const RasterF32& raster) {
    if (raster.channels() == 1) return raster;
    if (raster.channels() != 3) {
        fail(ErrorCode::InvalidArgument, "luma conversion expects 1 or 3 channels");
    }
    RasterF32 out(raster.height(), raster.width(), 1);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < raster.height(); ++y) {
        for (int x = 0; x < raster.width(); ++x) {
            out.at(y, x) = static_cast<float>(0.299 * raster.at(y, x, 0) + 0.587 * raster.at(y, x, 1) +
                                              0.114 * raster.at(y, x, 2));
        }
    }
    return out;
}

RasterF32 gradient_magnitude(const RasterF32& raster) {
    const RasterF32 luma = to_luma(raster);
    const int h = luma.height();
    const int w = luma.width();
    RasterF32 out(h, w, 1);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0);
        const int yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0);
            const int xp = std::min(x + 1, w - 1);
            const double gx = 0.5 * (static_cast<double>(luma.at(y, xp)) - luma.at(y, xm));
            const double gy = 0.5 * (static_cast<double>(luma.at(yp, x)) - luma.at(ym, x));
            out.at(y, x) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    return out;
}

RasterF32 resize_bilinear(const RasterF32& raster, int height, int width) {
    if (height <= 0 || width <= 0) fail(ErrorCode::InvalidDimension, "resize target must be positive");
    if (height == raster.height() && width == raster.width()) return raster;
    RasterF32 out(height, width, raster.channels());
    const double sx = static_cast<double>(raster.width()) / width;
    const double sy = static_cast<double>(raster.height()) / height;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < height; ++v) {
        const double py = (v + 0.5) * sy - 0.5;
        for (int u = 0; u < width; ++u) {
            const double px = (u + 0.5) * sx - 0.5;
            for (int ch = 0; ch < raster.channels(); ++ch) {
                out.at(v, u, ch) = static_cast<float>(detail::bilinear_clamp(raster, px, py, ch));
            }
        }
    }
    return out;
}

}  // namespace dewarp

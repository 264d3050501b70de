#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace dewarp {

namespace {

constexpr int kLevels = 4;
constexpr int kBlockRadius = 4;   // 9x9 blocks
constexpr int kSearchRadius = 4;  // +-4 px
constexpr int kMinLevelSide = 2 * kBlockRadius + 1;
constexpr double kCostScale = 4294967296.0;  // 2^32: sums stay exact below 2^31 pixels

RasterF32 half_size(const RasterF32& in) {
    const int h = (in.height() + 1) / 2;
    const int w = (in.width() + 1) / 2;
    RasterF32 out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(2 * y + 1, in.height() - 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(2 * x + 1, in.width() - 1);
            out.at(y, x) = 0.25f * (in.at(y0, x0) + in.at(y0, x1) + in.at(y1, x0) + in.at(y1, x1));
        }
    }
    return out;
}

struct Offset {
    int dx;
    int dy;
};

// Search offsets ordered by |d|^2, so a strict-improvement scan keeps the
// smallest displacement among equal costs.
std::vector<Offset> search_order() {
    std::vector<Offset> out;
    for (int dy = -kSearchRadius; dy <= kSearchRadius; ++dy) {
        for (int dx = -kSearchRadius; dx <= kSearchRadius; ++dx) out.push_back({dx, dy});
    }
    std::stable_sort(out.begin(), out.end(), [](Offset a, Offset b) {
        return a.dx * a.dx + a.dy * a.dy < b.dx * b.dx + b.dy * b.dy;
    });
    return out;
}

// One pyramid level. The (integer) initial flow of the block centre plus a
// search offset gives a total displacement d; every pixel scores the 9x9
// block SSD of a against b shifted by d (windows clipped at borders, b read
// with clamped indices). Costs for one d come from a single integral image.
FlowField match_level(const RasterF32& a, const RasterF32& b, const FlowField& init) {
    const int h = a.height();
    const int w = a.width();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const std::vector<Offset> order = search_order();

    int lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lo_x = std::min(lo_x, static_cast<int>(init.d[2 * i]));
        hi_x = std::max(hi_x, static_cast<int>(init.d[2 * i]));
        lo_y = std::min(lo_y, static_cast<int>(init.d[2 * i + 1]));
        hi_y = std::max(hi_y, static_cast<int>(init.d[2 * i + 1]));
    }
    const int span_x = hi_x - lo_x + 2 * kSearchRadius + 1;
    const int span_y = hi_y - lo_y + 2 * kSearchRadius + 1;
    // Rank of each offset in the search order, indexed by (oy, ox).
    std::vector<int> rank((2 * kSearchRadius + 1) * (2 * kSearchRadius + 1));
    for (std::size_t k = 0; k < order.size(); ++k) {
        rank[(order[k].dy + kSearchRadius) * (2 * kSearchRadius + 1) + order[k].dx + kSearchRadius] =
            static_cast<int>(k);
    }
    // Which displacements some pixel actually needs.
    std::vector<char> needed(static_cast<std::size_t>(span_x) * span_y, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int ix = static_cast<int>(init.d[2 * i]) - lo_x;
        const int iy = static_cast<int>(init.d[2 * i + 1]) - lo_y;
        for (int oy = 0; oy <= 2 * kSearchRadius; ++oy) {
            for (int ox = 0; ox <= 2 * kSearchRadius; ++ox) {
                needed[static_cast<std::size_t>(iy + oy) * span_x + ix + ox] = 1;
            }
        }
    }

    std::vector<std::int64_t> best_cost(n, 0);
    std::vector<int> best_rank(n, -1);
    std::vector<Offset> best(n, Offset{0, 0});
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    // Fixed-point squared differences: integer prefix sums are exact, so equal
    // blocks tie exactly and the tie-break toward zero offset holds.
    std::vector<std::int64_t> integral(static_cast<std::size_t>(h + 1) * stride, 0);

    for (int sy = 0; sy < span_y; ++sy) {
        for (int sx = 0; sx < span_x; ++sx) {
            if (!needed[static_cast<std::size_t>(sy) * span_x + sx]) continue;
            const int dx = sx + lo_x - kSearchRadius;
            const int dy = sy + lo_y - kSearchRadius;
#pragma omp parallel for schedule(static)
            for (int y = 0; y < h; ++y) {
                const int by = std::clamp(y + dy, 0, h - 1);
                std::int64_t run = 0;
                std::int64_t* row = &integral[(y + 1) * stride];
                for (int x = 0; x < w; ++x) {
                    const int bx = std::clamp(x + dx, 0, w - 1);
                    const double diff = static_cast<double>(a.at(y, x)) - b.at(by, bx);
                    run += std::llround(diff * diff * kCostScale);
                    row[x + 1] = run;
                }
            }
#pragma omp parallel for schedule(static)
            for (int x = 1; x <= w; ++x) {
                for (int y = 1; y <= h; ++y) integral[y * stride + x] += integral[(y - 1) * stride + x];
            }
#pragma omp parallel for schedule(static)
            for (int y = 0; y < h; ++y) {
                const int y0 = std::max(y - kBlockRadius, 0);
                const int y1 = std::min(y + kBlockRadius, h - 1) + 1;
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    const int ox = dx - static_cast<int>(init.d[2 * i]);
                    const int oy = dy - static_cast<int>(init.d[2 * i + 1]);
                    if (std::abs(ox) > kSearchRadius || std::abs(oy) > kSearchRadius) continue;
                    const int x0 = std::max(x - kBlockRadius, 0);
                    const int x1 = std::min(x + kBlockRadius, w - 1) + 1;
                    const std::int64_t cost = integral[y1 * stride + x1] - integral[y0 * stride + x1] -
                                              integral[y1 * stride + x0] + integral[y0 * stride + x0];
                    const int r = rank[(oy + kSearchRadius) * (2 * kSearchRadius + 1) + ox + kSearchRadius];
                    // Same outcome as scanning offsets in search order and
                    // replacing only on strict improvement.
                    if (best_rank[i] < 0 || cost < best_cost[i] || (cost == best_cost[i] && r < best_rank[i])) {
                        best_cost[i] = cost;
                        best_rank[i] = r;
                        best[i] = {ox, oy};
                    }
                }
            }
        }
    }

    FlowField out = init;
    for (std::size_t i = 0; i < n; ++i) {
        out.d[2 * i] += best[i].dx;
        out.d[2 * i + 1] += best[i].dy;
    }
    return out;
}

double median9(std::array<double, 9> v) {
    std::nth_element(v.begin(), v.begin() + 4, v.end());
    return v[4];
}

FlowField median3x3(const FlowField& in) {
    FlowField out(in.height, in.width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            for (int c = 0; c < 2; ++c) {
                std::array<double, 9> v{};
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = std::clamp(y + dy, 0, in.height - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = std::clamp(x + dx, 0, in.width - 1);
                        v[n++] = in.d[(static_cast<std::size_t>(sy) * in.width + sx) * 2 + c];
                    }
                }
                out.d[(static_cast<std::size_t>(y) * in.width + x) * 2 + c] = median9(v);
            }
        }
    }
    return out;
}

}  // namespace

const char* to_string(FlowMode mode) {
    return mode == FlowMode::Exact ? "exact-flow" : "estimated-flow";
}

FlowField resize_flow(const FlowField& flow, int height, int width) {
    if (flow.height < 1 || flow.width < 1 || height < 1 || width < 1) {
        fail(ErrorCode::InvalidDimension, "resize_flow: empty field");
    }
    if (flow.height == height && flow.width == width) return flow;
    const double sx = static_cast<double>(width) / flow.width;
    const double sy = static_cast<double>(height) / flow.height;
    FlowField out(height, width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        const double py = (y + 0.5) / sy - 0.5;
        for (int x = 0; x < width; ++x) {
            const double px = (x + 0.5) / sx - 0.5;
            const double cx = std::clamp(px, 0.0, static_cast<double>(flow.width - 1));
            const double cy = std::clamp(py, 0.0, static_cast<double>(flow.height - 1));
            const int x0 = std::min(static_cast<int>(cx), std::max(flow.width - 2, 0));
            const int y0 = std::min(static_cast<int>(cy), std::max(flow.height - 2, 0));
            const int x1 = std::min(x0 + 1, flow.width - 1);
            const int y1 = std::min(y0 + 1, flow.height - 1);
            const double fx = cx - x0;
            const double fy = cy - y0;
            const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 2;
            out.d[o] = sx * ((1 - fy) * ((1 - fx) * flow.dx(y0, x0) + fx * flow.dx(y0, x1)) +
                             fy * ((1 - fx) * flow.dx(y1, x0) + fx * flow.dx(y1, x1)));
            out.d[o + 1] = sy * ((1 - fy) * ((1 - fx) * flow.dy(y0, x0) + fx * flow.dy(y0, x1)) +
                                 fy * ((1 - fx) * flow.dy(y1, x0) + fx * flow.dy(y1, x1)));
        }
    }
    return out;
}

FlowField estimate_flow(const RasterF32& a, const RasterF32& b) {
    if (!a.same_shape(b)) fail(ErrorCode::InvalidArgument, "estimate_flow: dimension mismatch");
    if (a.empty()) fail(ErrorCode::InvalidDimension, "estimate_flow: empty image");

    std::vector<RasterF32> pa{to_luma(a)};
    std::vector<RasterF32> pb{to_luma(b)};
    while (static_cast<int>(pa.size()) < kLevels) {
        const RasterF32& top = pa.back();
        if ((top.height() + 1) / 2 < kMinLevelSide || (top.width() + 1) / 2 < kMinLevelSide) break;
        pa.push_back(half_size(pa.back()));
        pb.push_back(half_size(pb.back()));
    }

    FlowField flow(pa.back().height(), pa.back().width());
    for (int level = static_cast<int>(pa.size()) - 1; level >= 0; --level) {
        const RasterF32& la = pa[level];
        if (flow.height != la.height() || flow.width != la.width()) {
            flow = resize_flow(flow, la.height(), la.width());
            // Snap to whole pixels: the search lattice is integer, so a
            // fractional start could never land on an integer displacement.
            for (double& d : flow.d) d = std::round(d);
        }
        flow = match_level(la, pb[level], flow);
    }
    return median3x3(flow);
}

ExactFlow exact_flow(const CoordMap& bm_pred, const CoordMap& fm_gt) {
    if (bm_pred.kind() != MapKind::Backward || fm_gt.kind() != MapKind::Forward) {
        fail(ErrorCode::InvalidArgument, "exact_flow: expects a backward and a forward map");
    }
    const ComposedMap composed = compose_maps(fm_gt, bm_pred);
    const int h = bm_pred.height();
    const int w = bm_pred.width();
    ExactFlow out{FlowField(h, w), composed.valid};
    const auto c = composed.map.coords();
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const std::size_t i = static_cast<std::size_t>(v) * w + u;
            out.flow.d[2 * i] = c[2 * i] * w - 0.5 - u;
            out.flow.d[2 * i + 1] = c[2 * i + 1] * h - 0.5 - v;
        }
    }
    return out;
}

}  // namespace dewarp

#include "dewarp/synth.hpp"

#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/io.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

namespace dewarp {

using detail::Rng;
using detail::splitmix64;

namespace {

constexpr int kMaxWarpRetries = 5;
constexpr double kWarpDamping = 0.6;
constexpr double kMinJacobian = 0.05;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Point2 apply_homography(const std::array<double, 9>& h, Point2 p) {
    const double w = h[6] * p.x + h[7] * p.y + h[8];
    return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
}

RasterF32 crop_raster(const RasterF32& src, const CropRecord& c) {
    const int nw = src.width() - c.left - c.right;
    const int nh = src.height() - c.top - c.bottom;
    RasterF32 out(nh, nw, src.channels());
    for (int y = 0; y < nh; ++y) {
        for (int x = 0; x < nw; ++x) {
            for (int ch = 0; ch < src.channels(); ++ch) {
                out.at(y, x, ch) = src.at(y + c.top, x + c.left, ch);
            }
        }
    }
    return out;
}

CoordMap crop_map(const CoordMap& src, const CropRecord& c) {
    const int nw = src.width() - c.left - c.right;
    const int nh = src.height() - c.top - c.bottom;
    CoordMap out(nh, nw, src.kind());
    for (int v = 0; v < nh; ++v) {
        for (int u = 0; u < nw; ++u) out.set(v, u, src.at(v + c.top, u + c.left));
    }
    return out;
}

}  // namespace

const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::Complete: return "complete";
        case Regime::Overflow: return "overflow";
        case Regime::Absence: return "absence";
        case Regime::Occlusion: return "occlusion";
    }
    return "unknown";
}

std::optional<Regime> parse_regime(const std::string& name) {
    for (Regime r : {Regime::Complete, Regime::Overflow, Regime::Absence, Regime::Occlusion}) {
        if (name == to_string(r)) return r;
    }
    return std::nullopt;
}

bool OcclusionRecord::contains(Point2 q) const noexcept {
    if (kind == OcclusionKind::Edge) {
        return q.x >= x0 && q.x <= x1 && q.y >= y0 && q.y <= y1;
    }
    // Signed distances into the page from the corner; a thin band outside
    // the page edge is included so the soft mask edge is cleared too.
    const double a = corner.x < 0.5 ? q.x - corner.x : corner.x - q.x;
    const double b = corner.y < 0.5 ? q.y - corner.y : corner.y - q.y;
    constexpr double band = 0.02;
    return a >= -band && b >= -band && a / leg_x + b / leg_y <= 1.0;
}

// ---------------------------------------------------------------------------
// Page rendering

DocumentSample gen_document(std::uint64_t seed, int lines, int page) {
    if (lines < 1) fail(ErrorCode::InvalidArgument, "gen_document: need at least one line");
    if (page < 32) fail(ErrorCode::InvalidArgument, "gen_document: page must be at least 32 px");

    const int margin_y = static_cast<int>(std::lround(0.08 * page));
    const int margin_x = static_cast<int>(std::lround(0.07 * page));
    const double pitch = static_cast<double>(page - 2 * margin_y) / lines;
    const int bar = std::clamp(static_cast<int>(pitch * 0.45), 4, 16);
    const int avail = page - 2 * margin_x;
    if (pitch < bar + 4.0 || avail < 24) {
        fail(ErrorCode::InvalidArgument, "gen_document: page of " + std::to_string(page) +
                                             " px cannot hold " + std::to_string(lines) + " lines");
    }

    Rng rng(seed);
    const double bg = rng.uniform(0.88, 0.96);
    const float page_rgb[3] = {static_cast<float>(bg + rng.uniform(-0.02, 0.02)),
                            static_cast<float>(bg + rng.uniform(-0.02, 0.02)),
                            static_cast<float>(bg + rng.uniform(-0.02, 0.02))};
    const float ink_level = static_cast<float>(rng.uniform(0.08, 0.22));

    DocumentSample doc{RasterF32(page, page, 3), RasterF32(page, page, 1, 1.0f), {}, page};
    for (int y = 0; y < page; ++y) {
        for (int x = 0; x < page; ++x) {
            for (int ch = 0; ch < 3; ++ch) doc.image.at(y, x, ch) = page_rgb[ch];
        }
    }

    for (int i = 0; i < lines; ++i) {
        const int row0 = margin_y + static_cast<int>(std::lround(i * pitch + (pitch - bar) / 2.0));
        const int indent = static_cast<int>(rng.uniform(0.0, 0.15) * avail);
        const int room = avail - indent;
        const int cells = std::max(2, static_cast<int>(rng.uniform(0.5, 1.0) * room) / kControlPointSpacingPx);
        const int len = cells * kControlPointSpacingPx;
        const int x0 = margin_x + indent;

        for (int y = row0; y < row0 + bar; ++y) {
            for (int x = x0; x < x0 + len; ++x) {
                for (int ch = 0; ch < 3; ++ch) doc.image.at(y, x, ch) = ink_level;
            }
        }
        // Word gaps sit on cell boundaries, 3 px from the nearest control point.
        for (int m = 1; m < cells; ++m) {
            if (rng.uniform() >= 0.3) continue;
            for (int y = row0; y < row0 + bar; ++y) {
                for (int x = x0 + m * kControlPointSpacingPx - 1; x <= x0 + m * kControlPointSpacingPx; ++x) {
                    for (int ch = 0; ch < 3; ++ch) doc.image.at(y, x, ch) = page_rgb[ch];
                }
            }
        }

        TextLine line{i + 1, {}};
        const double mid = row0 + bar / 2.0;
        for (int k = 0; k < cells; ++k) {
            const double x = x0 + kControlPointSpacingPx / 2.0 + k * kControlPointSpacingPx;
            line.points.push_back({x / page, mid / page});
        }
        doc.textlines.push_back(std::move(line));
    }
    // Slight optical softening; crisp one-pixel edges do not survive two
    // bilinear resamplings.
    doc.image = gaussian_blur(doc.image, 0.7);
    return doc;
}

// ---------------------------------------------------------------------------
// Warp family

std::array<double, 9> square_to_quad(const std::array<Point2, 4>& corners) {
    // Solve the 8x8 DLT system for h00..h21 with h22 = 1.
    constexpr std::array<Point2, 4> src{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    double a[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double u = src[i].x;
        const double v = src[i].y;
        const double x = corners[i].x;
        const double y = corners[i].y;
        double* r0 = a[2 * i];
        double* r1 = a[2 * i + 1];
        r0[0] = u; r0[1] = v; r0[2] = 1; r0[6] = -u * x; r0[7] = -v * x; r0[8] = x;
        r1[3] = u; r1[4] = v; r1[5] = 1; r1[6] = -u * y; r1[7] = -v * y; r1[8] = y;
    }
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        if (std::abs(a[piv][col]) < 1e-12) fail(ErrorCode::GenerationFailure, "degenerate page quadrilateral");
        for (int k = 0; k < 9; ++k) std::swap(a[col][k], a[piv][k]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
        }
    }
    std::array<double, 9> h{};
    for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
    h[8] = 1.0;
    return h;
}

WarpGeometry draw_warp_geometry(const WarpParams& params) {
    if (params.fold_count < 0 || params.canvas_size < 2 || !(params.page_scale > 0.0) ||
        params.page_scale > 1.0 || params.perspective_strength < 0.0 || params.fold_sigma <= 0.0) {
        fail(ErrorCode::InvalidArgument, "invalid warp parameters");
    }
    Rng rng(params.seed);
    WarpGeometry g;
    constexpr std::array<Point2, 4> unit{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    for (int i = 0; i < 4; ++i) {
        const double jx = rng.uniform(-1.0, 1.0) * params.perspective_strength;
        const double jy = rng.uniform(-1.0, 1.0) * params.perspective_strength;
        g.corners[i] = {0.5 + params.page_scale * (unit[i].x - 0.5) + jx,
                        0.5 + params.page_scale * (unit[i].y - 0.5) + jy};
    }
    g.homography = square_to_quad(g.corners);
    g.curl = params.curl_amplitude * rng.uniform(0.5, 1.0) * rng.sign();
    for (int i = 0; i < params.fold_count; ++i) {
        WarpGeometry::Fold f;
        f.center = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = params.fold_amplitude * rng.uniform(0.5, 1.0);
        f.displacement = {amp * std::cos(angle), amp * std::sin(angle)};
        f.sigma = params.fold_sigma * rng.uniform(0.7, 1.3);
        g.folds.push_back(f);
    }
    return g;
}

Point2 eval_warp(const WarpGeometry& g, Point2 p) {
    Point2 q = p;
    for (const auto& f : g.folds) {
        const double dx = p.x - f.center.x;
        const double dy = p.y - f.center.y;
        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * f.sigma * f.sigma));
        q.x += w * f.displacement.x;
        q.y += w * f.displacement.y;
    }
    // Cylindrical bulge about a vertical axis: depth peaks mid-page and
    // magnifies both axes, so horizontal lines bow.
    const double s = q.x - 0.5;
    const double depth = g.curl * (1.0 - 4.0 * s * s);
    const Point2 curled{0.5 + s * (1.0 + depth), 0.5 + (q.y - 0.5) * (1.0 + depth)};
    return apply_homography(g.homography, curled);
}

double min_jacobian_determinant(const WarpGeometry& g) {
    constexpr int n = 64;
    constexpr double h = 1e-5;
    double worst = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Point2 p{(i + 0.5) / n, (j + 0.5) / n};
            const Point2 xp = eval_warp(g, {p.x + h, p.y});
            const Point2 xm = eval_warp(g, {p.x - h, p.y});
            const Point2 yp = eval_warp(g, {p.x, p.y + h});
            const Point2 ym = eval_warp(g, {p.x, p.y - h});
            const double a = (xp.x - xm.x) / (2 * h);
            const double b = (yp.x - ym.x) / (2 * h);
            const double c = (xp.y - xm.y) / (2 * h);
            const double d = (yp.y - ym.y) / (2 * h);
            worst = std::min(worst, a * d - b * c);
        }
    }
    return worst;
}

namespace {

bool stays_on_canvas(const WarpGeometry& g) {
    constexpr int n = 64;
    constexpr double tol = 1e-9;
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            const Point2 q = eval_warp(g, {static_cast<double>(i) / n, static_cast<double>(j) / n});
            if (q.x < -tol || q.x > 1.0 + tol || q.y < -tol || q.y > 1.0 + tol) return false;
        }
    }
    return true;
}

void damp(WarpGeometry& g, double page_scale) {
    for (int i = 0; i < 4; ++i) {
        constexpr std::array<Point2, 4> unit{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
        const Point2 base{0.5 + page_scale * (unit[i].x - 0.5), 0.5 + page_scale * (unit[i].y - 0.5)};
        g.corners[i].x = base.x + kWarpDamping * (g.corners[i].x - base.x);
        g.corners[i].y = base.y + kWarpDamping * (g.corners[i].y - base.y);
    }
    g.homography = square_to_quad(g.corners);
    g.curl *= kWarpDamping;
    for (auto& f : g.folds) {
        f.displacement.x *= kWarpDamping;
        f.displacement.y *= kWarpDamping;
    }
}

}  // namespace

CoordMap gen_warp(const WarpParams& params) {
    WarpGeometry g = draw_warp_geometry(params);
    for (int attempt = 0;; ++attempt) {
        if (min_jacobian_determinant(g) > kMinJacobian && stays_on_canvas(g)) break;
        if (attempt == kMaxWarpRetries) {
            fail(ErrorCode::GenerationFailure, "warp is not a diffeomorphism after damping");
        }
        damp(g, params.page_scale);
    }
    const int n = params.canvas_size;
    CoordMap map(n, n, MapKind::Backward);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) map.set(v, u, eval_warp(g, {(u + 0.5) / n, (v + 0.5) / n}));
    }
    return map;
}

// ---------------------------------------------------------------------------
// Samples

WarpSample apply_warp(const DocumentSample& doc, const CoordMap& bm_gt, std::uint64_t seed) {
    if (bm_gt.kind() != MapKind::Backward) fail(ErrorCode::InvalidArgument, "apply_warp needs a backward map");
    InversionResult inv = invert_map(bm_gt, kDefaultInversionIterations, 1.0, bm_gt.height(), bm_gt.width());
    if (inv.mean_residual_px > 1.0) {
        fail(ErrorCode::GenerationFailure,
             "backward map inversion did not converge (mean residual " + fmt_double(inv.mean_residual_px) + " px)");
    }
    WarpSample s;
    s.flat = doc.image;
    s.distorted = sample_through(doc.image, inv.inverse, 0.0);
    s.dm_gt = sample_through(doc.doc_mask, inv.inverse, 0.0);
    s.bm_gt = bm_gt;
    s.fm_gt = std::move(inv.inverse);
    s.textlines = doc.textlines;
    s.regime = Regime::Complete;
    s.seed = seed;
    return s;
}

WarpSample crop_boundaries(const WarpSample& sample, int n_b, std::uint64_t seed) {
    if (n_b < 1 || n_b > 4) fail(ErrorCode::InvalidArgument, "crop_boundaries: n_b must be in [1, 4]");
    const int w = sample.distorted.width();
    const int h = sample.distorted.height();

    int xmin = w, xmax = -1, ymin = h, ymax = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (sample.dm_gt.at(y, x) > 0.5f) {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    }
    if (xmax < 0) fail(ErrorCode::DegenerateInput, "crop_boundaries: sample has no document pixels");

    Rng rng(seed);
    std::array<int, 4> sides{0, 1, 2, 3};  // left, top, right, bottom
    for (int i = 3; i > 0; --i) std::swap(sides[i], sides[rng.below(static_cast<std::uint64_t>(i) + 1)]);

    // Each chosen side is cut 5-20% of the side length past the document's
    // extreme pixel, so the page always runs off that edge.
    CropRecord c;
    c.sides = n_b;
    for (int k = 0; k < n_b; ++k) {
        const double frac = rng.uniform(0.05, 0.20);
        switch (sides[k]) {
            case 0: c.left = xmin + static_cast<int>(std::lround(frac * w)); break;
            case 1: c.top = ymin + static_cast<int>(std::lround(frac * h)); break;
            case 2: c.right = (w - 1 - xmax) + static_cast<int>(std::lround(frac * w)); break;
            case 3: c.bottom = (h - 1 - ymax) + static_cast<int>(std::lround(frac * h)); break;
        }
    }
    const auto shrink = [](int& a, int& b, int size) {
        const int keep = std::max(size / 3, 16);
        const int excess = a + b - (size - keep);
        if (excess > 0) {
            const int da = (excess * a + (a + b) - 1) / (a + b);
            a -= std::min(a, da);
            b -= std::min(b, excess - da);
        }
    };
    shrink(c.left, c.right, w);
    shrink(c.top, c.bottom, h);

    const int nw = w - c.left - c.right;
    const int nh = h - c.top - c.bottom;
    WarpSample out;
    out.flat = sample.flat;
    out.distorted = crop_raster(sample.distorted, c);
    out.dm_gt = crop_raster(sample.dm_gt, c);
    out.fm_gt = crop_map(sample.fm_gt, c);
    out.bm_gt = sample.bm_gt;
    auto coords = out.bm_gt.coords();
    for (std::size_t i = 0; i < coords.size(); i += 2) {
        coords[i] = (coords[i] * w - c.left) / nw;
        coords[i + 1] = (coords[i + 1] * h - c.top) / nh;
    }
    out.textlines = sample.textlines;
    out.regime = Regime::Overflow;
    out.seed = sample.seed;
    out.crop = c;
    out.occlusion = sample.occlusion;
    out.params = sample.params;
    return out;
}

WarpSample occlude(const WarpSample& sample, OcclusionKind kind, std::uint64_t seed) {
    if (sample.regime != Regime::Complete && sample.regime != Regime::Overflow) {
        fail(ErrorCode::InvalidArgument, "occlude: sample must be complete or overflow");
    }
    Rng rng(seed);
    OcclusionRecord rec;
    rec.kind = kind;
    rec.area_fraction = rng.uniform(0.02, 0.15);
    float color[3] = {0.0f, 0.0f, 0.0f};

    if (kind == OcclusionKind::Corner) {
        constexpr std::array<Point2, 4> corners{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
        rec.corner = corners[rng.below(4)];
        const double aspect = rng.uniform(0.6, 1.6);
        rec.leg_x = std::sqrt(2.0 * rec.area_fraction * aspect);
        rec.leg_y = std::sqrt(2.0 * rec.area_fraction / aspect);
    } else {
        const int side = static_cast<int>(rng.below(4));
        const double along = rng.uniform(0.2, 0.5);
        const double depth = rec.area_fraction / along;
        const double outside = rng.uniform(0.05, 0.15);
        const double centre = rng.uniform(along / 2.0, 1.0 - along / 2.0);
        const double a0 = centre - along / 2.0;
        const double a1 = centre + along / 2.0;
        switch (side) {
            case 0: rec.x0 = a0; rec.x1 = a1; rec.y0 = -outside; rec.y1 = depth; break;           // top
            case 1: rec.x0 = 1.0 - depth; rec.x1 = 1.0 + outside; rec.y0 = a0; rec.y1 = a1; break;  // right
            case 2: rec.x0 = a0; rec.x1 = a1; rec.y0 = 1.0 - depth; rec.y1 = 1.0 + outside; break;  // bottom
            default: rec.x0 = -outside; rec.x1 = depth; rec.y0 = a0; rec.y1 = a1; break;           // left
        }
        const double grey = rng.uniform(0.3, 0.6);
        for (float& c : color) c = static_cast<float>(grey + rng.uniform(-0.08, 0.08));
    }

    WarpSample out = sample;
    for (int y = 0; y < out.distorted.height(); ++y) {
        for (int x = 0; x < out.distorted.width(); ++x) {
            if (!rec.contains(out.fm_gt.at(y, x))) continue;
            out.dm_gt.at(y, x) = 0.0f;
            for (int ch = 0; ch < out.distorted.channels(); ++ch) out.distorted.at(y, x, ch) = color[ch];
        }
    }
    out.regime = kind == OcclusionKind::Corner ? Regime::Absence : Regime::Occlusion;
    out.occlusion = rec;
    return out;
}

RasterF32 make_margin_gt(const WarpSample& sample) {
    const RasterF32 rect = sample_through(sample.dm_gt, sample.bm_gt, 0.0);
    RasterF32 m(rect.height(), rect.width(), 1);
    for (int y = 0; y < rect.height(); ++y) {
        for (int x = 0; x < rect.width(); ++x) m.at(y, x) = rect.at(y, x) >= 0.5f ? 0.0f : 1.0f;
    }
    return m;
}

WarpSample generate_sample(std::uint64_t seed, Regime regime, int canvas_size) {
    Rng rng(seed);
    WarpParams p;
    p.perspective_strength = rng.uniform(0.01, 0.05);
    p.curl_amplitude = rng.uniform(0.0, 0.12);
    p.fold_count = static_cast<int>(rng.below(4));
    p.fold_sigma = rng.uniform(0.12, 0.25);
    p.fold_amplitude = rng.uniform(0.0, 0.03);
    p.page_scale = rng.uniform(0.80, 0.90);
    p.canvas_size = canvas_size;
    p.seed = splitmix64(seed ^ 0x5741525000000000ull);

    const int capacity = std::max(1, static_cast<int>(canvas_size * 0.84 / 16.0));
    const int lines = std::min(capacity, 5 + static_cast<int>(rng.below(8)));
    const DocumentSample doc = gen_document(splitmix64(seed ^ 0x444f430000000000ull), lines, canvas_size);
    WarpSample s = apply_warp(doc, gen_warp(p), seed);
    s.params = p;

    const std::uint64_t sub = splitmix64(seed ^ 0x524547494d450000ull);
    switch (regime) {
        case Regime::Complete: break;
        case Regime::Overflow: s = crop_boundaries(s, 1 + static_cast<int>(rng.below(4)), sub); break;
        case Regime::Absence: s = occlude(s, OcclusionKind::Corner, sub); break;
        case Regime::Occlusion: s = occlude(s, OcclusionKind::Edge, sub); break;
    }
    return s;
}

RegimeMix default_regime_mix() {
    return RegimeMix{{41.0 / 188.0, 107.0 / 188.0, 20.0 / 188.0, 20.0 / 188.0}};
}

RegimeMix parse_regime_mix(const std::string& text) {
    RegimeMix mix;
    std::array<bool, 4> seen{};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(ErrorCode::InvalidArgument, "regime entry '" + item + "' lacks ':'");
        const auto regime = parse_regime(item.substr(0, colon));
        if (!regime) fail(ErrorCode::InvalidArgument, "unknown regime '" + item.substr(0, colon) + "'");
        const auto idx = static_cast<std::size_t>(*regime);
        if (seen[idx]) fail(ErrorCode::InvalidArgument, "regime listed twice: " + item.substr(0, colon));
        seen[idx] = true;
        double w = 0.0;
        try {
            std::size_t used = 0;
            const std::string num = item.substr(colon + 1);
            w = std::stod(num, &used);
            if (used != num.size()) throw std::invalid_argument(num);
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "bad regime weight in '" + item + "'");
        }
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidArgument, "regime weights must be >= 0");
        mix.weights[idx] = w;
    }
    double total = 0.0;
    for (double w : mix.weights) total += w;
    if (std::abs(total - 1.0) > 1e-6) fail(ErrorCode::InvalidArgument, "regime weights must sum to 1");
    return mix;
}

std::vector<Regime> plan_regimes(int count, const RegimeMix& mix, std::uint64_t seed) {
    if (count < 0) fail(ErrorCode::InvalidArgument, "sample count must be >= 0");
    std::array<int, 4> n{};
    std::array<double, 4> rem{};
    int assigned = 0;
    for (std::size_t r = 0; r < 4; ++r) {
        const double exact = mix.weights[r] * count;
        n[r] = static_cast<int>(std::floor(exact));
        rem[r] = exact - n[r];
        assigned += n[r];
    }
    // Remaining slots go to the largest remainders; ties favour the earlier regime.
    while (assigned < count) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < 4; ++r) {
            if (rem[r] > rem[best]) best = r;
        }
        ++n[best];
        rem[best] = -1.0;
        ++assigned;
    }
    std::vector<Regime> plan;
    for (std::size_t r = 0; r < 4; ++r) plan.insert(plan.end(), n[r], static_cast<Regime>(r));
    Rng rng(splitmix64(seed ^ 0x4d49580000000000ull));
    for (std::size_t i = plan.size(); i > 1; --i) std::swap(plan[i - 1], plan[rng.below(i)]);
    return plan;
}

std::uint64_t sample_seed(std::uint64_t batch_seed, int index) {
    return splitmix64(batch_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index));
}

// ---------------------------------------------------------------------------
// Files

std::string format_textlines(const std::vector<TextLine>& lines) {
    std::string out;
    for (const auto& line : lines) {
        out += std::to_string(line.id);
        for (const Point2& p : line.points) {
            out += ' ';
            out += fmt_double(p.x);
            out += ' ';
            out += fmt_double(p.y);
        }
        out += '\n';
    }
    return out;
}

std::vector<TextLine> parse_textlines(const std::string& text) {
    std::vector<TextLine> lines;
    std::istringstream in(text);
    std::string row;
    int lineno = 0;
    while (std::getline(in, row)) {
        ++lineno;
        if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(row);
        TextLine line;
        if (!(fields >> line.id)) fail(ErrorCode::Io, "textlines: bad id on line " + std::to_string(lineno));
        double x = 0.0;
        double y = 0.0;
        while (fields >> x) {
            if (!(fields >> y)) fail(ErrorCode::Io, "textlines: odd coordinate count on line " + std::to_string(lineno));
            line.points.push_back({x, y});
        }
        if (!fields.eof()) fail(ErrorCode::Io, "textlines: bad number on line " + std::to_string(lineno));
        lines.push_back(std::move(line));
    }
    return lines;
}

void write_sample(const std::filesystem::path& dir, const WarpSample& sample) {
    std::filesystem::create_directories(dir);
    io::write_png(dir / "distorted.png", sample.distorted);
    io::write_png(dir / "dm_gt.png", sample.dm_gt);
    io::write_png(dir / "flat.png", sample.flat);
    io::write_png(dir / "m_gt.png", make_margin_gt(sample));
    io::write_dwmap(dir / "bm_gt.dwmap", sample.bm_gt);
    io::write_dwmap(dir / "fm_gt.dwmap", sample.fm_gt);
    io::write_text_atomic(dir / "textlines.txt", format_textlines(sample.textlines));

    std::ostringstream meta;
    meta << "regime=" << to_string(sample.regime) << '\n';
    meta << "seed=" << sample.seed << '\n';
    meta << "distorted_size=" << sample.distorted.width() << 'x' << sample.distorted.height() << '\n';
    meta << "rectified_size=" << sample.bm_gt.width() << 'x' << sample.bm_gt.height() << '\n';
    if (const auto& p = sample.params) {
        meta << "perspective_strength=" << fmt_double(p->perspective_strength) << '\n';
        meta << "curl_amplitude=" << fmt_double(p->curl_amplitude) << '\n';
        meta << "fold_count=" << p->fold_count << '\n';
        meta << "fold_sigma=" << fmt_double(p->fold_sigma) << '\n';
        meta << "fold_amplitude=" << fmt_double(p->fold_amplitude) << '\n';
        meta << "page_scale=" << fmt_double(p->page_scale) << '\n';
        meta << "canvas_size=" << p->canvas_size << '\n';
        meta << "warp_seed=" << p->seed << '\n';
    }
    if (const auto& c = sample.crop) {
        meta << "crop=" << c->left << ',' << c->top << ',' << c->right << ',' << c->bottom << '\n';
        meta << "crop_sides=" << c->sides << '\n';
    }
    if (const auto& o = sample.occlusion) {
        meta << "occlusion=" << (o->kind == OcclusionKind::Corner ? "corner" : "edge") << '\n';
        meta << "occlusion_area=" << fmt_double(o->area_fraction) << '\n';
        if (o->kind == OcclusionKind::Corner) {
            meta << "occlusion_corner=" << fmt_double(o->corner.x) << ',' << fmt_double(o->corner.y) << '\n';
            meta << "occlusion_legs=" << fmt_double(o->leg_x) << ',' << fmt_double(o->leg_y) << '\n';
        } else {
            meta << "occlusion_rect=" << fmt_double(o->x0) << ',' << fmt_double(o->y0) << ','
                 << fmt_double(o->x1) << ',' << fmt_double(o->y1) << '\n';
        }
    }
    io::write_text_atomic(dir / "meta.txt", meta.str());
}

}  // namespace dewarp

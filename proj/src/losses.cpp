#include "dewarp/losses.hpp"

#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "kernels.hpp"

#include <cmath>
#include <numeric>

namespace dewarp {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Sum of per-row partials in row order; independent of the thread count.
double ordered_sum(const std::vector<double>& partials) {
    return std::accumulate(partials.begin(), partials.end(), 0.0);
}

void require_backward(const CoordMap& map, const char* what) {
    if (map.kind() != MapKind::Backward) {
        fail(ErrorCode::InvalidArgument, std::string(what) + " must be a backward map");
    }
}

}  // namespace

TermValue loss_bm(const CoordMap& z_p, const CoordMap& z_gt) {
    require_backward(z_p, "z_p");
    require_backward(z_gt, "z_gt");
    if (!z_p.same_shape(z_gt)) fail(ErrorCode::InvalidArgument, "loss_bm: shape mismatch");

    const int h = z_p.height();
    const std::size_t row_len = static_cast<std::size_t>(z_p.width()) * 2;
    const double count = static_cast<double>(row_len) * h;
    const auto p = z_p.coords();
    const auto g = z_gt.coords();

    TermValue out{0.0, VectorField(h, z_p.width())};
    std::vector<double> partial(static_cast<std::size_t>(h), 0.0);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
        double acc = 0.0;
        for (std::size_t k = v * row_len; k < (v + 1) * row_len; ++k) {
            const double d = p[k] - g[k];
            acc += std::abs(d);
            out.grad.values[k] = sign(d) / count;
        }
        partial[v] = acc;
    }
    out.value = ordered_sum(partial) / count;
    return out;
}

std::vector<RemappedLine> remap_control_points(const CoordMap& z_p, const CoordMap& fm_gt,
                                               std::span<const TextLine> lines) {
    require_backward(z_p, "z_p");
    if (fm_gt.kind() != MapKind::Forward) fail(ErrorCode::InvalidArgument, "fm_gt must be a forward map");
    std::vector<RemappedLine> out;
    out.reserve(lines.size());
    for (const TextLine& line : lines) {
        RemappedLine r{line.id, {}, {}, {}};
        for (const Point2& p : line.points) {
            const Point2 q = sample_coords(z_p, p);
            r.distorted.push_back(q);
            r.points.push_back(sample_coords(fm_gt, q));
            r.valid.push_back(inside_unit_square(q) ? 1 : 0);
        }
        out.push_back(std::move(r));
    }
    return out;
}

TermValue loss_text(const CoordMap& z_p, const CoordMap& fm_gt, std::span<const TextLine> lines) {
    require_backward(z_p, "z_p");
    if (fm_gt.kind() != MapKind::Forward) fail(ErrorCode::InvalidArgument, "fm_gt must be a forward map");

    const double rect_h = z_p.height();
    TermValue out{0.0, VectorField(z_p.height(), z_p.width())};

    struct Site {
        Point2 p;
        double y_px;
        std::array<double, 4> jac;
    };
    std::vector<std::vector<Site>> used;
    std::vector<double> line_mean;
    for (const TextLine& line : lines) {
        if (line.points.empty()) continue;
        double mean = 0.0;
        for (const Point2& p : line.points) mean += p.y;
        mean = mean / static_cast<double>(line.points.size()) * rect_h;

        std::vector<Site> sites;
        for (const Point2& p : line.points) {
            const Point2 q = sample_coords(z_p, p);
            if (!inside_unit_square(q)) continue;
            Site s{p, 0.0, {}};
            s.y_px = sample_coords_jacobian(fm_gt, q, s.jac).y * rect_h;
            sites.push_back(s);
        }
        if (sites.size() < 2) continue;
        used.push_back(std::move(sites));
        line_mean.push_back(mean);
    }
    if (used.empty()) fail(ErrorCode::DegenerateInput, "loss_text: no line has two valid control points");

    const double t = static_cast<double>(used.size());
    for (std::size_t i = 0; i < used.size(); ++i) {
        const double k = static_cast<double>(used[i].size());
        double line_sum = 0.0;
        for (const Site& s : used[i]) {
            const double dev = s.y_px - line_mean[i];
            line_sum += dev * dev;
#ifdef DEWARP_INJECT_SIGN_BUG
            const double coef = -2.0 * dev / (t * k) * rect_h;
#else
            const double coef = 2.0 * dev / (t * k) * rect_h;
#endif
            // d y / d q comes from fm_gt; q is linear in the four z_p nodes around p.
            const FieldStencil st = field_stencil(z_p.height(), z_p.width(), s.p);
            for (int n = 0; n < 4; ++n) {
                out.grad.values[st.node[n] * 2] += st.weight[n] * coef * s.jac[2];
                out.grad.values[st.node[n] * 2 + 1] += st.weight[n] * coef * s.jac[3];
            }
        }
        out.value += line_sum / k;
    }
    out.value /= t;
    return out;
}

RasterF32 soft_background(const RasterF32& dm_gt, double sigma) {
    if (dm_gt.channels() != 1) fail(ErrorCode::InvalidArgument, "document mask must be single channel");
    RasterF32 inv(dm_gt.height(), dm_gt.width(), 1);
    for (std::size_t i = 0; i < inv.data().size(); ++i) inv.data()[i] = 1.0f - dm_gt.data()[i];
    return gaussian_blur(inv, sigma);
}

TermValue loss_margin(const CoordMap& z_p, const RasterF32& background_soft, const RasterF32& m_gt) {
    require_backward(z_p, "z_p");
    if (background_soft.channels() != 1 || m_gt.channels() != 1) {
        fail(ErrorCode::InvalidArgument, "loss_margin: masks must be single channel");
    }
    if (m_gt.height() != z_p.height() || m_gt.width() != z_p.width()) {
        fail(ErrorCode::InvalidArgument, "loss_margin: m_gt does not match the backward map shape");
    }
    const int h = z_p.height();
    const int w = z_p.width();
    const double count = static_cast<double>(h) * w;
    const double bw = background_soft.width();
    const double bh = background_soft.height();
    const auto c = z_p.coords();

    TermValue out{0.0, VectorField(h, w)};
    std::vector<double> partial(static_cast<std::size_t>(h), 0.0);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
        double acc = 0.0;
        for (int u = 0; u < w; ++u) {
            const std::size_t i = (static_cast<std::size_t>(v) * w + u) * 2;
            const double px = detail::to_pixel(c[i], background_soft.width());
            const double py = detail::to_pixel(c[i + 1], background_soft.height());
            double d_px = 0.0;
            double d_py = 0.0;
            const double m_p = detail::bilinear_fill_grad(background_soft, px, py, 0, 1.0, d_px, d_py);
            const double diff = m_p - m_gt.at(v, u);
            acc += std::abs(diff);
            const double s = sign(diff) / count;
            out.grad.values[i] = s * d_px * bw;
            out.grad.values[i + 1] = s * d_py * bh;
        }
        partial[v] = acc;
    }
    out.value = ordered_sum(partial) / count;
    return out;
}

LossReport loss_total(const CoordMap& z_p, const LossInputs& in, const LossWeights& weights) {
    if (weights.alpha < 0.0 || weights.beta < 0.0) fail(ErrorCode::InvalidArgument, "loss weights must be >= 0");
    if (!in.has_b() && !in.has_t() && !in.has_m()) {
        fail(ErrorCode::InvalidArgument, "loss_total: no loss term has its inputs");
    }
    LossReport r;
    r.grad = VectorField(z_p.height(), z_p.width());
    auto accumulate = [&](const VectorField& g, double scale) {
        for (std::size_t k = 0; k < r.grad.values.size(); ++k) r.grad.values[k] += scale * g.values[k];
    };
    if (in.has_b()) {
        TermValue b = loss_bm(z_p, *in.z_gt);
        r.l_b = b.value;
        r.has_b = true;
        accumulate(b.grad, 1.0);
    }
    if (in.has_m()) {
        TermValue m = loss_margin(z_p, *in.background_soft, *in.m_gt);
        r.l_m = m.value;
        r.has_m = true;
        accumulate(m.grad, weights.alpha);
    }
    if (in.has_t()) {
        TermValue t = loss_text(z_p, *in.fm_gt, in.textlines);
        r.l_t = t.value;
        r.has_t = true;
        accumulate(t.grad, weights.beta);
    }
    r.l_total = r.l_b + weights.alpha * r.l_m + weights.beta * r.l_t;
    return r;
}

}  // namespace dewarp

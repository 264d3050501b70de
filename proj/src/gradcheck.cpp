#include "dewarp/error.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/losses.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dewarp {

GradcheckResult gradcheck(const Objective& objective, std::vector<double> params, double eps,
                          std::uint64_t seed, std::size_t max_checks) {
    if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "gradcheck: eps must be positive");
    std::vector<double> analytic(params.size(), 0.0);
    const double f0 = objective(params, &analytic);
    if (!std::isfinite(f0)) fail(ErrorCode::NumericFailure, "gradcheck: objective is not finite");

    std::vector<std::size_t> active;
    std::vector<std::size_t> all(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        all[i] = i;
        if (analytic[i] != 0.0) active.push_back(i);
    }

    detail::Rng rng(seed);
    const auto shuffle = [&](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(active);
    shuffle(all);

    const std::size_t budget = std::min(max_checks, params.size());
    std::vector<std::size_t> picks(active.begin(), active.begin() + std::min(active.size(), budget / 2));
    for (std::size_t i : all) {
        if (picks.size() >= budget) break;
        if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
    }
    std::sort(picks.begin(), picks.end());

    GradcheckResult result;
    for (std::size_t i : picks) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double fp = objective(params, nullptr);
        params[i] = saved - eps;
        const double fm = objective(params, nullptr);
        params[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            fail(ErrorCode::NumericFailure, "gradcheck: objective is not finite");
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rel > result.max_rel_error || result.checked == 0) {
            result.max_rel_error = std::max(result.max_rel_error, rel);
            result.worst_index = i;
        }
        ++result.checked;
    }
    return result;
}

namespace {

// Distance (in pixels) a sampling position keeps from bilinear cell
// boundaries; far larger than any finite-difference step.
constexpr double kCellClearance = 0.05;
// Minimum |z_p - z_gt| so the L1 term never flips sign under perturbation.
constexpr double kL1Clearance = 1e-3;

bool clear_of_cells(double normalized, int size) {
    const double px = normalized * size - 0.5;
    const double frac = px - std::floor(px);
    return frac >= kCellClearance && frac <= 1.0 - kCellClearance;
}

bool node_ok(double value, double truth, int bg_size) {
    return clear_of_cells(value, bg_size) && std::abs(value - truth) >= kL1Clearance;
}

// Shifts in pixels tried in order until a condition holds.
constexpr double kShifts[] = {0.0, 0.23, -0.23, 0.41, -0.41, 0.67, -0.67, 0.89, -0.89};

}  // namespace

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, int size) {
    WarpParams params;
    params.canvas_size = size;
    params.seed = seed;
    params.perspective_strength = 0.03;
    params.curl_amplitude = 0.08;
    params.fold_count = 1;
    params.fold_amplitude = 0.02;
    params.page_scale = 0.86;
    const int lines = std::max(1, std::min(3, static_cast<int>(size * 0.84 / 18.0)));
    const DocumentSample doc = gen_document(detail::splitmix64(seed), lines, size);
    WarpSample sample = apply_warp(doc, gen_warp(params), seed);
    sample = crop_boundaries(sample, 1, detail::splitmix64(seed + 1));

    GradcheckInstance inst{sample, sample.bm_gt, soft_background(sample.dm_gt), make_margin_gt(sample)};
    const int bw = inst.background_soft.width();
    const int bh = inst.background_soft.height();

    // Smooth perturbation of about 1.5 px, then nudge every coordinate clear
    // of cell boundaries and of the L1 kink.
    detail::Rng rng(seed ^ 0x6763ull);
    const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = 1.5 / size;
    auto z = inst.z_p.coords();
    const auto gt = sample.bm_gt.coords();
    for (int v = 0; v < size; ++v) {
        for (int u = 0; u < size; ++u) {
            const std::size_t i = (static_cast<std::size_t>(v) * size + u) * 2;
            const double s = (u + 0.5) / size;
            const double t = (v + 0.5) / size;
            z[i] += amp * std::sin(2.0 * std::numbers::pi * (s + 0.5 * t) + phase_x);
            z[i + 1] += amp * std::cos(2.0 * std::numbers::pi * (t - 0.3 * s) + phase_y);
            for (int axis = 0; axis < 2; ++axis) {
                const int n = axis == 0 ? bw : bh;
                const double base = z[i + axis];
                for (double shift : kShifts) {
                    const double cand = base + shift / n;
                    if (node_ok(cand, gt[i + axis], n)) {
                        z[i + axis] = cand;
                        break;
                    }
                }
            }
        }
    }

    // Control-point sites: the distorted location q must also sit clear of
    // fm_gt's cells; shift the four supporting nodes together.
    const CoordMap& fm = sample.fm_gt;
    for (const TextLine& line : sample.textlines) {
        for (const Point2& p : line.points) {
            const FieldStencil st = field_stencil(size, size, p);
            std::array<double, 8> base{};
            for (int k = 0; k < 4; ++k) {
                base[2 * k] = z[st.node[k] * 2];
                base[2 * k + 1] = z[st.node[k] * 2 + 1];
            }
            bool placed = false;
            for (double sx : kShifts) {
                for (double sy : kShifts) {
                    bool ok = true;
                    for (int k = 0; k < 4 && ok; ++k) {
                        const double x = base[2 * k] + sx / bw;
                        const double y = base[2 * k + 1] + sy / bh;
                        ok = node_ok(x, gt[st.node[k] * 2], bw) && node_ok(y, gt[st.node[k] * 2 + 1], bh);
                        z[st.node[k] * 2] = x;
                        z[st.node[k] * 2 + 1] = y;
                    }
                    if (!ok) continue;
                    const Point2 q = sample_coords(inst.z_p, p);
                    const bool inside = q.x > 0.01 && q.x < 0.99 && q.y > 0.01 && q.y < 0.99;
                    if (inside && clear_of_cells(q.x, fm.width()) && clear_of_cells(q.y, fm.height())) {
                        placed = true;
                        break;
                    }
                    if (!inside) {
                        placed = true;  // invalid points are excluded and stay excluded
                        break;
                    }
                }
                if (placed) break;
            }
            if (!placed) {
                for (int k = 0; k < 4; ++k) {
                    z[st.node[k] * 2] = base[2 * k];
                    z[st.node[k] * 2 + 1] = base[2 * k + 1];
                }
            }
        }
    }
    return inst;
}

GradcheckReport run_loss_gradchecks(const GradcheckInstance& inst, double eps, std::uint64_t seed,
                                    const LossWeights& weights) {
    const auto& z0 = inst.z_p;
    const std::vector<double> params(z0.coords().begin(), z0.coords().end());

    const auto make_objective = [&](auto term) -> Objective {
        return [&z0, term](std::span<const double> x, std::vector<double>* grad) {
            CoordMap z(z0.height(), z0.width(), MapKind::Backward);
            std::copy(x.begin(), x.end(), z.coords().begin());
            const auto [value, g] = term(z);
            if (grad != nullptr) *grad = g.values;
            return value;
        };
    };

    const WarpSample& s = inst.sample;
    LossInputs in;
    in.z_gt = &s.bm_gt;
    in.fm_gt = &s.fm_gt;
    in.textlines = s.textlines;
    in.background_soft = &inst.background_soft;
    in.m_gt = &inst.m_gt;

    GradcheckReport rep;
    rep.l_b = gradcheck(make_objective([&](const CoordMap& z) { return loss_bm(z, s.bm_gt); }), params, eps, seed)
                  .max_rel_error;
    rep.l_t = gradcheck(make_objective([&](const CoordMap& z) { return loss_text(z, s.fm_gt, s.textlines); }),
                        params, eps, seed)
                  .max_rel_error;
    rep.l_m = gradcheck(make_objective([&](const CoordMap& z) {
                            return loss_margin(z, inst.background_soft, inst.m_gt);
                        }),
                        params, eps, seed)
                  .max_rel_error;
    rep.total = gradcheck(make_objective([&](const CoordMap& z) {
                              LossReport r = loss_total(z, in, weights);
                              return TermValue{r.l_total, std::move(r.grad)};
                          }),
                          params, eps, seed)
                    .max_rel_error;
    return rep;
}

}  // namespace dewarp

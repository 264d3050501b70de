#include "dewarp/optimizer.hpp"

#include "dewarp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dewarp {

namespace {

// Bilinear placement of pixel centers on the lattice along one axis.
struct AxisWeights {
    std::vector<int> lo;
    std::vector<double> t;
};

AxisWeights axis_weights(int pixels, int nodes) {
    AxisWeights a{std::vector<int>(static_cast<std::size_t>(pixels)),
                  std::vector<double>(static_cast<std::size_t>(pixels))};
    for (int p = 0; p < pixels; ++p) {
        const double g = (p + 0.5) / pixels * (nodes - 1);
        const int lo = std::min(static_cast<int>(std::floor(g)), nodes - 2);
        a.lo[p] = lo;
        a.t[p] = g - lo;
    }
    return a;
}

void check_grid(int rows, int cols) {
    if (rows < 2 || cols < 2) fail(ErrorCode::InvalidArgument, "control grid needs at least 2x2 nodes");
}

}  // namespace

ControlGrid init_grid(int rows, int cols) {
    check_grid(rows, cols);
    return ControlGrid{rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols * 2, 0.0)};
}

CoordMap expand(const ControlGrid& grid, int height, int width) {
    check_grid(grid.rows, grid.cols);
    CoordMap map = identity_map(height, width, MapKind::Backward);
    const AxisWeights ax = axis_weights(width, grid.cols);
    const AxisWeights ay = axis_weights(height, grid.rows);

    // Interpolate along x for every lattice row, then along y.
    std::vector<double> rows(static_cast<std::size_t>(grid.rows) * width * 2);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < grid.rows; ++i) {
        for (int u = 0; u < width; ++u) {
            const std::size_t a = (static_cast<std::size_t>(i) * grid.cols + ax.lo[u]) * 2;
            const double t = ax.t[u];
            const std::size_t o = (static_cast<std::size_t>(i) * width + u) * 2;
            rows[o] = (1.0 - t) * grid.offsets[a] + t * grid.offsets[a + 2];
            rows[o + 1] = (1.0 - t) * grid.offsets[a + 1] + t * grid.offsets[a + 3];
        }
    }
    auto c = map.coords();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < height; ++v) {
        const std::size_t r0 = static_cast<std::size_t>(ay.lo[v]) * width * 2;
        const std::size_t r1 = r0 + static_cast<std::size_t>(width) * 2;
        const double t = ay.t[v];
        for (int u = 0; u < width; ++u) {
            const std::size_t k = (static_cast<std::size_t>(v) * width + u) * 2;
            const std::size_t q = static_cast<std::size_t>(u) * 2;
            c[k] += (1.0 - t) * rows[r0 + q] + t * rows[r1 + q];
            c[k + 1] += (1.0 - t) * rows[r0 + q + 1] + t * rows[r1 + q + 1];
        }
    }
    return map;
}

std::vector<double> expand_adjoint(const ControlGrid& grid, const VectorField& g) {
    const int height = g.height;
    const int width = g.width;
    const AxisWeights ax = axis_weights(width, grid.cols);
    const AxisWeights ay = axis_weights(height, grid.rows);

    // Adjoint of the y pass; each column is owned by one thread.
    std::vector<double> rows(static_cast<std::size_t>(grid.rows) * width * 2, 0.0);
#pragma omp parallel for schedule(static)
    for (int u = 0; u < width; ++u) {
        for (int v = 0; v < height; ++v) {
            const std::size_t k = (static_cast<std::size_t>(v) * width + u) * 2;
            const double t = ay.t[v];
            const std::size_t r0 = (static_cast<std::size_t>(ay.lo[v]) * width + u) * 2;
            const std::size_t r1 = r0 + static_cast<std::size_t>(width) * 2;
            rows[r0] += (1.0 - t) * g.values[k];
            rows[r0 + 1] += (1.0 - t) * g.values[k + 1];
            rows[r1] += t * g.values[k];
            rows[r1 + 1] += t * g.values[k + 1];
        }
    }
    // Adjoint of the x pass; each lattice row is owned by one thread.
    std::vector<double> out(grid.offsets.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < grid.rows; ++i) {
        for (int u = 0; u < width; ++u) {
            const std::size_t o = (static_cast<std::size_t>(i) * width + u) * 2;
            const std::size_t a = (static_cast<std::size_t>(i) * grid.cols + ax.lo[u]) * 2;
            const double t = ax.t[u];
            out[a] += (1.0 - t) * rows[o];
            out[a + 1] += (1.0 - t) * rows[o + 1];
            out[a + 2] += t * rows[o];
            out[a + 3] += t * rows[o + 1];
        }
    }
    return out;
}

ControlGrid prolong(const ControlGrid& grid, int rows, int cols) {
    ControlGrid fine = init_grid(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const double gy = static_cast<double>(i) * (grid.rows - 1) / (rows - 1);
        const int i0 = std::min(static_cast<int>(std::floor(gy)), grid.rows - 2);
        const double ty = gy - i0;
        for (int j = 0; j < cols; ++j) {
            const double gx = static_cast<double>(j) * (grid.cols - 1) / (cols - 1);
            const int j0 = std::min(static_cast<int>(std::floor(gx)), grid.cols - 2);
            const double tx = gx - j0;
            for (int c = 0; c < 2; ++c) {
                const auto at = [&](int r, int col) {
                    return grid.offsets[(static_cast<std::size_t>(r) * grid.cols + col) * 2 + c];
                };
                const double top = (1.0 - tx) * at(i0, j0) + tx * at(i0, j0 + 1);
                const double bot = (1.0 - tx) * at(i0 + 1, j0) + tx * at(i0 + 1, j0 + 1);
                fine.offsets[(static_cast<std::size_t>(i) * cols + j) * 2 + c] = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    return fine;
}

std::vector<int> grid_schedule(int final_size) {
    check_grid(final_size, final_size);
    std::vector<int> levels{final_size};
    int n = final_size;
    while (levels.size() < 3) {
        int coarse = 0;
        for (int c = (n + 1) / 2; c >= 4; --c) {
            if ((n - 1) % (c - 1) == 0) {
                coarse = c;
                break;
            }
        }
        if (coarse == 0 || coarse == n) break;
        levels.push_back(coarse);
        n = coarse;
    }
    std::reverse(levels.begin(), levels.end());
    return levels;
}

namespace {

struct Evaluation {
    LossReport report;
    std::vector<double> grad;
};

Evaluation evaluate(const DewarpProblem& problem, const ControlGrid& grid, const OptConfig& cfg) {
    const CoordMap map = expand(grid, problem.height, problem.width);
    Evaluation e{loss_total(map, problem.inputs, cfg.weights), {}};
    e.grad = expand_adjoint(grid, e.report.grad);
    e.report.grad = VectorField();  // not needed past this point
    return e;
}

bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

TraceEntry entry(int iteration, const LossReport& r, int grid_size) {
    return TraceEntry{iteration, r.l_b, r.l_m, r.l_t, r.l_total, grid_size};
}

}  // namespace

OptResult optimize(const DewarpProblem& problem, const OptConfig& cfg) {
    if (cfg.max_iters < 1) fail(ErrorCode::InvalidArgument, "max_iters must be >= 1");
    if (!(cfg.learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    const LossInputs& in = problem.inputs;
    if (!in.has_b() && !in.has_m() && !in.has_t()) {
        fail(ErrorCode::InvalidArgument, "optimize: no active loss term");
    }

    const std::vector<int> levels = grid_schedule(cfg.grid_size);
    const int n_levels = static_cast<int>(levels.size());
    std::vector<int> budget(levels.size(), cfg.max_iters);
    if (n_levels > 1) {
        const int coarse_share = std::max(1, cfg.max_iters / (2 * (n_levels - 1)));
        for (int l = 0; l + 1 < n_levels; ++l) budget[l] = coarse_share;
    }

    OptResult result;
    int level = 0;
    result.grid = init_grid(levels[0], levels[0]);
    Evaluation cur = evaluate(problem, result.grid, cfg);

    const auto finish = [&]() {
        result.bm = expand(result.grid, problem.height, problem.width);
        return result;
    };
    if (!std::isfinite(cur.report.l_total)) {
        throw OptimizationFailure("objective is not finite at initialization", finish());
    }

    std::vector<double> m(cur.grad.size(), 0.0);
    std::vector<double> v(cur.grad.size(), 0.0);
    int adam_t = 0;
    int level_iters = 0;
    std::vector<double> level_hist;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        if (all_zero(cur.grad) || cur.report.l_total == 0.0) {
            // Stationary: nothing on any finer lattice can move either.
            result.loss_trace.push_back(entry(it, cur.report, levels[level]));
            result.iterations_run = it;
            result.converged = true;
            return finish();
        }

        ++adam_t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, adam_t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, adam_t);
        std::vector<double> step(cur.grad.size());
        for (std::size_t k = 0; k < step.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * cur.grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * cur.grad[k] * cur.grad[k];
            step[k] = -cfg.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.epsilon);
        }

        double scale = 1.0;
        for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
            ControlGrid cand = result.grid;
            for (std::size_t k = 0; k < step.size(); ++k) {
                cand.offsets[k] = std::clamp(cand.offsets[k] + scale * step[k], -kMaxOffset, kMaxOffset);
            }
            Evaluation e = evaluate(problem, cand, cfg);
            if (!std::isfinite(e.report.l_total)) {
                throw OptimizationFailure("objective became non-finite at iteration " + std::to_string(it),
                                          finish());
            }
            if (e.report.l_total <= cur.report.l_total + 1e-9) {
                result.grid = std::move(cand);
                cur = std::move(e);
                break;
            }
            // After the last halving the step is dropped and the state kept.
        }

        result.loss_trace.push_back(entry(it, cur.report, levels[level]));
        result.iterations_run = it;
        ++level_iters;
        level_hist.push_back(cur.report.l_total);

        bool plateau = false;
        if (level_iters > cfg.plateau_patience) {
            const double ref = level_hist[level_hist.size() - 1 - static_cast<std::size_t>(cfg.plateau_patience)];
            plateau = ref - cur.report.l_total <= cfg.plateau_tolerance * std::abs(ref);
        }
        const bool last = level + 1 == n_levels;
        if (last) {
            if (plateau) {
                result.converged = true;
                break;
            }
        } else if (plateau || level_iters >= budget[level]) {
            ++level;
            result.grid = prolong(result.grid, levels[level], levels[level]);
            cur = evaluate(problem, result.grid, cfg);
            m.assign(cur.grad.size(), 0.0);
            v.assign(cur.grad.size(), 0.0);
            adam_t = 0;
            level_iters = 0;
            level_hist.clear();
        }
    }
    return finish();
}

RasterF32 rectify(const RasterF32& image, const CoordMap& bm) { return grid_sample(image, bm, 0.0); }

double mean_endpoint_error_px(const CoordMap& a, const CoordMap& b) {
    if (!a.same_shape(b)) fail(ErrorCode::InvalidArgument, "endpoint error: shape mismatch");
    const auto ca = a.coords();
    const auto cb = b.coords();
    double total = 0.0;
    for (std::size_t i = 0; i < ca.size(); i += 2) {
        total += std::hypot((ca[i] - cb[i]) * a.width(), (ca[i + 1] - cb[i + 1]) * a.height());
    }
    return total / static_cast<double>(a.pixel_count());
}

}  // namespace dewarp

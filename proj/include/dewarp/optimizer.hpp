#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/error.hpp"
#include "dewarp/losses.hpp"
#include "dewarp/raster.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dewarp {

/// Coarse displacement lattice. Node (i, j) sits at normalized
/// (j / (cols-1), i / (rows-1)); offsets are added to the identity map.
struct ControlGrid {
    int rows = 0;
    int cols = 0;
    std::vector<double> offsets;  // interleaved (dx, dy), row-major

    std::size_t node_count() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

inline constexpr double kMaxOffset = 0.5;

ControlGrid init_grid(int rows, int cols);

/// Bilinear upsampling of identity + offsets to an h x w backward map.
CoordMap expand(const ControlGrid& grid, int height, int width);

/// Transpose of expand's linear part: pulls a gradient with respect to the
/// expanded map back onto the grid offsets.
std::vector<double> expand_adjoint(const ControlGrid& grid, const VectorField& map_grad);

/// Re-samples offsets onto a finer lattice. Exact (the expanded map does not
/// change) when (rows-1) divides (new_rows-1) and likewise for columns.
ControlGrid prolong(const ControlGrid& grid, int rows, int cols);

/// Grid sizes visited by the coarse-to-fine schedule, coarsest first. Each
/// level nests inside the next.
std::vector<int> grid_schedule(int final_size);

struct OptConfig {
    int max_iters = 400;
    double learning_rate = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int plateau_patience = 30;
    double plateau_tolerance = 1e-5;
    int grid_size = 31;
    int max_halvings = 5;
    LossWeights weights;
    std::uint64_t seed = 0;
};

struct TraceEntry {
    int iteration = 0;
    double l_b = 0.0;
    double l_m = 0.0;
    double l_t = 0.0;
    double l_total = 0.0;
    int grid_size = 0;
};

struct OptResult {
    CoordMap bm;
    ControlGrid grid;
    std::vector<TraceEntry> loss_trace;
    int iterations_run = 0;
    bool converged = false;
};

/// Loss inputs plus the rectified output size.
struct DewarpProblem {
    int height = 0;
    int width = 0;
    LossInputs inputs;
};

/// Thrown when the objective stops being finite; carries the last finite state.
class OptimizationFailure : public Error {
public:
    OptimizationFailure(const std::string& what, OptResult last)
        : Error(ErrorCode::NumericFailure, what), last_(std::move(last)) {}
    const OptResult& last_state() const noexcept { return last_; }

private:
    OptResult last_;
};

/// Adam on control-grid offsets with a coarse-to-fine schedule and a
/// step-halving safeguard; accepted steps never raise l_total by more than 1e-9.
OptResult optimize(const DewarpProblem& problem, const OptConfig& cfg);

/// grid_sample(image, bm).
RasterF32 rectify(const RasterF32& image, const CoordMap& bm);

/// Mean Euclidean distance between two backward maps, in rectified pixels.
double mean_endpoint_error_px(const CoordMap& a, const CoordMap& b);

}  // namespace dewarp

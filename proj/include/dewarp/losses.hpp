#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/raster.hpp"
#include "dewarp/synth.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dewarp {

struct LossWeights {
    double alpha = 0.1;  // margin term
    double beta = 0.5;   // text-line term
};

/// Scalar loss and its gradient with respect to every coordinate of z_p.
struct TermValue {
    double value = 0.0;
    VectorField grad;
};

struct LossReport {
    double l_b = 0.0;
    double l_m = 0.0;
    double l_t = 0.0;
    double l_total = 0.0;
    VectorField grad;
    bool has_b = false;
    bool has_m = false;
    bool has_t = false;
};

/// Mean absolute difference over all 2*H*W coordinates.
TermValue loss_bm(const CoordMap& z_p, const CoordMap& z_gt);

struct RemappedLine {
    int id = 0;
    std::vector<Point2> points;       // rectified frame
    std::vector<Point2> distorted;    // intermediate location in the distorted image
    std::vector<std::uint8_t> valid;
};

/// Control points pushed through z_p into the distorted image and back
/// through fm_gt. Points whose distorted location leaves [0,1]^2 are invalid.
std::vector<RemappedLine> remap_control_points(const CoordMap& z_p, const CoordMap& fm_gt,
                                               std::span<const TextLine> lines);

/// Mean squared deviation (in rectified pixels) of remapped control-point
/// ordinates from their line's ground-truth mean ordinate. Lines are
/// averaged, each over its own valid points; lines with fewer than 2 valid
/// points are skipped.
TermValue loss_text(const CoordMap& z_p, const CoordMap& fm_gt, std::span<const TextLine> lines);

/// blur(1 - dm_gt, sigma) on the distorted image grid.
RasterF32 soft_background(const RasterF32& dm_gt, double sigma = 2.0);

/// Mean |m_gt - grid_sample(background_soft, z_p)|, sampling fill 1 outside the image.
TermValue loss_margin(const CoordMap& z_p, const RasterF32& background_soft, const RasterF32& m_gt);

/// Optional inputs for the combined objective. A null pointer (or an empty
/// text-line list) drops the corresponding term.
struct LossInputs {
    const CoordMap* z_gt = nullptr;
    const CoordMap* fm_gt = nullptr;
    std::span<const TextLine> textlines;
    const RasterF32* background_soft = nullptr;
    const RasterF32* m_gt = nullptr;

    bool has_b() const noexcept { return z_gt != nullptr; }
    bool has_t() const noexcept { return fm_gt != nullptr && !textlines.empty(); }
    bool has_m() const noexcept { return background_soft != nullptr && m_gt != nullptr; }
};

/// l_total = l_b + alpha * l_m + beta * l_t with the summed gradient.
LossReport loss_total(const CoordMap& z_p, const LossInputs& inputs, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

/// Returns f(params); fills `grad` (same length) when non-null.
using Objective = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
};

/// Central differences at up to max_checks seeded parameter indices. Half of
/// the picks come from parameters with a nonzero analytic gradient.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradcheckResult gradcheck(const Objective& objective, std::vector<double> params, double eps,
                          std::uint64_t seed, std::size_t max_checks = 512);

/// Seeded small problem with all three loss terms active. Sampling positions
/// are nudged off bilinear cell boundaries so finite differences never
/// straddle a kink.
struct GradcheckInstance {
    WarpSample sample;
    CoordMap z_p;
    RasterF32 background_soft;
    RasterF32 m_gt;
};

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, int size = 64);

struct GradcheckReport {
    double l_b = 0.0;
    double l_t = 0.0;
    double l_m = 0.0;
    double total = 0.0;
};

/// Runs gradcheck for each term and for the weighted total.
GradcheckReport run_loss_gradchecks(const GradcheckInstance& instance, double eps, std::uint64_t seed,
                                    const LossWeights& weights = {});

}  // namespace dewarp

#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/raster.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dewarp {

/// Per-pixel displacement in pixels: content at p in the first image sits
/// at p + d(p) in the second.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<double> d;  // interleaved (dx, dy)

    FlowField() = default;
    FlowField(int h, int w) : height(h), width(w), d(static_cast<std::size_t>(h) * w * 2, 0.0) {}

    double dx(int y, int x) const noexcept { return d[(static_cast<std::size_t>(y) * width + x) * 2]; }
    double dy(int y, int x) const noexcept { return d[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
};

enum class FlowMode { Exact, Estimated };
const char* to_string(FlowMode mode);

inline constexpr int kEvalLongSide = 598;

// ---------------------------------------------------------------------------
// MS-SSIM

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Per-scale statistics; the last entry's ssim is the full l*cs mean.
struct MsSsimScale {
    double cs = 0.0;
    double ssim = 0.0;
};

std::vector<MsSsimScale> ms_ssim_scales(const RasterF32& a, const RasterF32& b);

/// Five-scale MS-SSIM on single-channel images in [0,1] (11x11 Gaussian
/// window, sigma 1.5). Fewer scales, with renormalized weights, when the
/// smaller side is under 176 px.
double ms_ssim(const RasterF32& a, const RasterF32& b);

/// Number of scales ms_ssim uses for an image whose smaller side is min_side.
int ms_ssim_scale_count(int min_side);

// ---------------------------------------------------------------------------
// Flow

/// Pyramid block matching (4 levels, 9x9 blocks, +-4 px search, 3x3 median).
FlowField estimate_flow(const RasterF32& a, const RasterF32& b);

/// Flow on the rectified grid from a predicted backward map and the
/// ground-truth forward map: d(p) = fm_gt(bm_pred(p)) - p, in rectified
/// pixels. `valid` marks pixels whose predicted source lies inside the image.
struct ExactFlow {
    FlowField flow;
    std::vector<std::uint8_t> valid;
};
ExactFlow exact_flow(const CoordMap& bm_pred, const CoordMap& fm_gt);

/// Bilinear resize of a flow field; displacements are rescaled to the new grid.
FlowField resize_flow(const FlowField& flow, int height, int width);

// ---------------------------------------------------------------------------
// Distortion metrics

/// Mean displacement magnitude over the pixels where mask > 0.5 (all pixels
/// when mask is null).
double ld(const FlowField& flow, const RasterF32* mask = nullptr);

struct AdAlignment {
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
    double value = 0.0;
};

/// Gradient-weighted residual after the best isotropic scale + translation
/// fit, divided by the image diagonal. Pixels where mask <= 0.5 get zero weight.
AdAlignment ad_detail(const FlowField& flow, const RasterF32& gt_image, const RasterF32* mask = nullptr);
double ad(const FlowField& flow, const RasterF32& gt_image, const RasterF32* mask = nullptr);

// ---------------------------------------------------------------------------
// Text metrics

/// UTF-8 to Unicode scalar values; malformed bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view text);

std::size_t edit_distance(std::u32string_view hyp, std::u32string_view ref);
std::size_t edit_distance(std::string_view hyp, std::string_view ref);

double cer(std::string_view hyp, std::string_view ref);

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
    std::string image_id;
    FlowMode mode = FlowMode::Estimated;
    double ms_ssim = 0.0;
    double ld = 0.0;
    double ad = 0.0;
    std::optional<double> ed;
    std::optional<double> cer;
};

struct EvalInputs {
    const RasterF32* rectified = nullptr;
    const RasterF32* gt = nullptr;
    const ExactFlow* exact = nullptr;  // flow on the gt grid; null selects estimated mode
    const std::vector<std::pair<std::string, std::string>>* texts = nullptr;  // (hyp, ref)
};

/// Resizes to the evaluation grid (long side 598), then runs every metric
/// the inputs allow.
MetricsReport evaluate_sample(const std::string& image_id, const EvalInputs& inputs);

std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);
/// Column means of the rows; `mode` is shared or "mixed".
std::string report_csv_mean_row(const std::vector<MetricsReport>& rows);

}  // namespace dewarp

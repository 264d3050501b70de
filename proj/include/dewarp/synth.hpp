#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dewarp {

/// Control points along one text line midline, rectified frame, 8 px apart.
struct TextLine {
    int id = 0;
    std::vector<Point2> points;
};

inline constexpr int kControlPointSpacingPx = 8;

struct DocumentSample {
    RasterF32 image;     // flat page, 3 channels
    RasterF32 doc_mask;  // all ones
    std::vector<TextLine> textlines;
    int page_size = 0;
};

enum class Regime { Complete, Overflow, Absence, Occlusion };

const char* to_string(Regime regime);
std::optional<Regime> parse_regime(const std::string& name);

enum class OcclusionKind { Corner, Edge };

/// Region hidden by occlude(), described in the rectified (page) frame.
struct OcclusionRecord {
    OcclusionKind kind = OcclusionKind::Corner;
    // Corner: triangle with the right angle at `corner` and legs of length
    // leg_x / leg_y along the page edges. Edge: axis-aligned rectangle
    // [x0,x1] x [y0,y1], partly outside the page.
    Point2 corner;
    double leg_x = 0.0;
    double leg_y = 0.0;
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double area_fraction = 0.0;  // of the page area

    bool contains(Point2 page_point) const noexcept;
};

struct CropRecord {
    int left = 0;    // pixels removed from each side of the distorted image
    int top = 0;
    int right = 0;
    int bottom = 0;
    int sides = 0;
};

struct WarpParams {
    double perspective_strength = 0.05;  // corner jitter, normalized units
    double curl_amplitude = 0.08;        // depth of the cylindrical bulge
    int fold_count = 2;
    double fold_sigma = 0.18;            // Gaussian bump width, normalized
    double fold_amplitude = 0.025;       // bump displacement, normalized
    double page_scale = 0.86;            // page extent within the canvas
    int canvas_size = 432;
    std::uint64_t seed = 0;
};

struct WarpSample {
    RasterF32 flat;       // ground-truth flat page
    RasterF32 distorted;
    RasterF32 dm_gt;      // distorted document mask
    CoordMap bm_gt;
    CoordMap fm_gt;
    std::vector<TextLine> textlines;
    Regime regime = Regime::Complete;
    std::uint64_t seed = 0;
    std::optional<CropRecord> crop;
    std::optional<OcclusionRecord> occlusion;
    std::optional<WarpParams> params;  // set by generate_sample
};

/// Random draws behind one warp; evaluating it needs no RNG.
struct WarpGeometry {
    std::array<Point2, 4> corners;  // page corners in the image: TL, TR, BR, BL
    std::array<double, 9> homography{};  // row-major 3x3, unit square -> image
    double curl = 0.0;                   // signed bulge depth
    struct Fold {
        Point2 center;
        Point2 displacement;
        double sigma = 0.0;
    };
    std::vector<Fold> folds;
};

WarpGeometry draw_warp_geometry(const WarpParams& params);

/// Backward mapping of the page point p (normalized) into the image.
Point2 eval_warp(const WarpGeometry& geometry, Point2 p);

/// Homography through four point correspondences, unit square corners (TL,
/// TR, BR, BL) -> `corners`.
std::array<double, 9> square_to_quad(const std::array<Point2, 4>& corners);

/// Smallest Jacobian determinant of the warp over a 64 x 64 probe grid.
double min_jacobian_determinant(const WarpGeometry& geometry);

DocumentSample gen_document(std::uint64_t seed, int lines, int page);

/// Backward map on a canvas_size x canvas_size grid. Retries with damped
/// amplitudes when the warp folds over or leaves the canvas.
CoordMap gen_warp(const WarpParams& params);

WarpSample apply_warp(const DocumentSample& doc, const CoordMap& bm_gt, std::uint64_t seed = 0);

/// Crops n_b random sides of the distorted image so the page runs past them.
WarpSample crop_boundaries(const WarpSample& sample, int n_b, std::uint64_t seed);

WarpSample occlude(const WarpSample& sample, OcclusionKind kind, std::uint64_t seed);

/// Rectified background mask: 1 = margin, 0 = document content.
RasterF32 make_margin_gt(const WarpSample& sample);

/// Full sample for a regime with per-sample random warp strengths.
WarpSample generate_sample(std::uint64_t seed, Regime regime, int canvas_size = 432);

/// Regime proportions, indexed by Regime. Weights are non-negative and sum to 1.
struct RegimeMix {
    std::array<double, 4> weights{};
};

/// 41 / 107 / 20 / 20 out of 188.
RegimeMix default_regime_mix();

/// Parses `name:weight,...`; names may be omitted (weight 0) but not
/// repeated. Throws InvalidArgument on unknown names, negative weights or a
/// sum that is not 1 within 1e-6.
RegimeMix parse_regime_mix(const std::string& text);

/// Regime of each of `count` samples: per-class counts by largest remainder,
/// then a seeded shuffle.
std::vector<Regime> plan_regimes(int count, const RegimeMix& mix, std::uint64_t seed);

/// Seed of sample `index` in a batch.
std::uint64_t sample_seed(std::uint64_t batch_seed, int index);

/// Writes the sample directory layout (distorted.png, dm_gt.png, bm_gt.dwmap,
/// fm_gt.dwmap, m_gt.png, flat.png, textlines.txt, meta.txt).
void write_sample(const std::filesystem::path& dir, const WarpSample& sample);

std::string format_textlines(const std::vector<TextLine>& lines);
std::vector<TextLine> parse_textlines(const std::string& text);

}  // namespace dewarp

#pragma once

// Single-threaded, straight-line versions of the hot kernels. They share no
// code with the parallel implementations and serve as test oracles and
// benchmark baselines.

#include "dewarp/coord_map.hpp"
#include "dewarp/losses.hpp"
#include "dewarp/optimizer.hpp"
#include "dewarp/raster.hpp"

#include <vector>

namespace dewarp::reference {

RasterF32 grid_sample(const RasterF32& raster, const CoordMap& map, double fill = 0.0);

/// Direct 2-D convolution with the outer product of the 1-D taps.
RasterF32 gaussian_blur(const RasterF32& raster, double sigma);

RasterF32 gradient_magnitude(const RasterF32& raster);

TermValue loss_margin(const CoordMap& z_p, const RasterF32& background_soft, const RasterF32& m_gt);

/// Per-pixel evaluation of the four surrounding node weights.
CoordMap expand(const ControlGrid& grid, int height, int width);

/// Per-pixel scatter of the gradient onto the four surrounding nodes.
std::vector<double> expand_adjoint(const ControlGrid& grid, const VectorField& map_grad);

}  // namespace dewarp::reference

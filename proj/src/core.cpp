#include "dewarp/coord_map.hpp"
#include "dewarp/error.hpp"
#include "dewarp/raster.hpp"

#include <cmath>
#include <string>

namespace dewarp {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::InvalidDimension: return "invalid dimension";
        case ErrorCode::DegenerateInput: return "degenerate input";
        case ErrorCode::NumericFailure: return "numeric failure";
        case ErrorCode::GenerationFailure: return "generation failure";
        case ErrorCode::Io: return "i/o error";
    }
    return "unknown error";
}

RasterF32::RasterF32(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
        fail(ErrorCode::InvalidDimension, "raster dimensions must be positive, got " +
                                              std::to_string(height) + "x" + std::to_string(width) +
                                              "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool RasterF32::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

CoordMap::CoordMap(int height, int width, MapKind kind) : height_(height), width_(width), kind_(kind) {
    if (height < 2 || width < 2) {
        fail(ErrorCode::InvalidDimension, "coordinate map needs at least 2x2 pixels, got " +
                                              std::to_string(height) + "x" + std::to_string(width));
    }
    coords_.assign(static_cast<std::size_t>(height) * width * 2, 0.0);
}

}  // namespace dewarp

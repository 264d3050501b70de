#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dewarp {

/// Normalized image coordinate. (0,0) is the top-left corner of the source
/// image and (1,1) the bottom-right corner; pixel i has its center at
/// (i + 0.5) / size.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

enum class MapKind : unsigned char {
    Backward = 0,  // rectified pixel -> location in the distorted image
    Forward = 1,   // distorted pixel -> location in the rectified image
};

inline MapKind flipped(MapKind kind) {
    return kind == MapKind::Backward ? MapKind::Forward : MapKind::Backward;
}

/// H x W field of absolute normalized coordinates. Values may lie outside
/// [0,1]; such locations are outside the source image.
class CoordMap {
public:
    CoordMap() = default;
    CoordMap(int height, int width, MapKind kind);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    MapKind kind() const noexcept { return kind_; }
    void set_kind(MapKind kind) noexcept { kind_ = kind; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }

    Point2 at(int v, int u) const noexcept {
        const std::size_t i = index(v, u);
        return {coords_[i], coords_[i + 1]};
    }
    void set(int v, int u, Point2 p) noexcept {
        const std::size_t i = index(v, u);
        coords_[i] = p.x;
        coords_[i + 1] = p.y;
    }

    /// Interleaved (x, y) values, row-major.
    std::span<double> coords() noexcept { return coords_; }
    std::span<const double> coords() const noexcept { return coords_; }

    bool same_shape(const CoordMap& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

private:
    std::size_t index(int v, int u) const noexcept {
        return (static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(u)) *
               2;
    }

    int height_ = 0;
    int width_ = 0;
    MapKind kind_ = MapKind::Backward;
    std::vector<double> coords_;
};

/// Per-pixel 2-vector field. Used for loss gradients with respect to a
/// CoordMap and for pixel displacement fields.
struct VectorField {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // interleaved (x, y), row-major

    VectorField() = default;
    VectorField(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w * 2, 0.0) {}

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
};

}  // namespace dewarp

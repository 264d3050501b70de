#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dewarp {

/// Row-major H x W x C float image. Masks are single channel.
class RasterF32 {
public:
    RasterF32() = default;
    RasterF32(int height, int width, int channels, float fill = 0.0f);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int y, int x, int c = 0) noexcept { return data_[index(y, x, c)]; }
    float at(int y, int x, int c = 0) const noexcept { return data_[index(y, x, c)]; }

    std::span<float> row(int y) noexcept {
        return {data_.data() + index(y, 0, 0), static_cast<std::size_t>(width_ * channels_)};
    }
    std::span<const float> row(int y) const noexcept {
        return {data_.data() + index(y, 0, 0), static_cast<std::size_t>(width_ * channels_)};
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_shape(const RasterF32& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    /// True when every value is finite.
    bool all_finite() const noexcept;

private:
    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

}  // namespace dewarp

#pragma once

#include "dewarp/coord_map.hpp"
#include "dewarp/raster.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dewarp::io {

namespace fs = std::filesystem;

// 8-bit PNG, gray for 1 channel and RGB for 3. Values are scaled by 255 and
// rounded; reading divides by 255.
void write_png(const fs::path& path, const RasterF32& raster);
RasterF32 read_png(const fs::path& path);

// ".dwmap": "DWMP", u32 version=1, u32 height, u32 width, u8 kind, then
// height*width*2 f32 (x then y, row-major). All little-endian.
std::vector<unsigned char> encode_dwmap(const CoordMap& map);
CoordMap decode_dwmap(const std::vector<unsigned char>& bytes);
void write_dwmap(const fs::path& path, const CoordMap& map);
CoordMap read_dwmap(const fs::path& path);

// ".dwf32": "DWF0", u32 height, u32 width, u32 channels, f32 data.
std::vector<unsigned char> encode_dwf32(const RasterF32& raster);
RasterF32 decode_dwf32(const std::vector<unsigned char>& bytes);
void write_dwf32(const fs::path& path, const RasterF32& raster);
RasterF32 read_dwf32(const fs::path& path);

std::vector<unsigned char> read_bytes(const fs::path& path);

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
void write_atomic(const fs::path& path, const std::function<void(const fs::path&)>& writer);
void write_text_atomic(const fs::path& path, const std::string& text);

}  // namespace dewarp::io

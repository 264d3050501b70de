#include "dewarp/io.hpp"

#include "dewarp/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dewarp::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::vector<unsigned char>& out, float f) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, const char* what) : bytes_(bytes), what_(what) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) fail(ErrorCode::Io, std::string(what_) + ": truncated data");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void magic(const char* m) {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
            fail(ErrorCode::Io, std::string(what_) + ": bad magic");
        }
        pos_ += 4;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::vector<unsigned char>& bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace

std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_atomic(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
    fs::path tmp = path;
    tmp += ".tmp";
    try {
        writer(tmp);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_atomic(path, [&](const fs::path& tmp) {
        write_bytes(tmp, std::vector<unsigned char>(text.begin(), text.end()));
    });
}

void write_png(const fs::path& path, const RasterF32& raster) {
    if (raster.channels() != 1 && raster.channels() != 3) {
        fail(ErrorCode::InvalidArgument, "png output supports 1 or 3 channels");
    }
    std::vector<unsigned char> pixels(raster.data().size());
    std::transform(raster.data().begin(), raster.data().end(), pixels.begin(), [](float v) {
        const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
        return static_cast<unsigned char>(std::lround(s));
    });
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width());
    image.height = static_cast<png_uint_32>(raster.height());
    image.format = raster.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    write_atomic(path, [&](const fs::path& tmp) {
        if (!png_image_write_to_file(&image, tmp.c_str(), 0, pixels.data(), 0, nullptr)) {
            const std::string msg = image.message;
            png_image_free(&image);
            fail(ErrorCode::Io, "png write failed for " + path.string() + ": " + msg);
        }
    });
}

RasterF32 read_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        fail(ErrorCode::Io, "cannot read png " + path.string() + ": " + image.message);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::Io, "cannot decode png " + path.string() + ": " + msg);
    }
    RasterF32 out(static_cast<int>(image.height), static_cast<int>(image.width), channels);
    std::transform(pixels.begin(), pixels.end(), out.data().begin(),
                   [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
    return out;
}

std::vector<unsigned char> encode_dwmap(const CoordMap& map) {
    std::vector<unsigned char> out{'D', 'W', 'M', 'P'};
    out.reserve(17 + map.coords().size() * 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(map.height()));
    put_u32(out, static_cast<std::uint32_t>(map.width()));
    out.push_back(static_cast<unsigned char>(map.kind()));
    for (double c : map.coords()) put_f32(out, static_cast<float>(c));
    return out;
}

CoordMap decode_dwmap(const std::vector<unsigned char>& bytes) {
    Reader r(bytes, "dwmap");
    r.magic("DWMP");
    const std::uint32_t version = r.u32();
    if (version != 1) fail(ErrorCode::Io, "dwmap: unsupported version " + std::to_string(version));
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    const std::uint8_t kind = r.u8();
    if (kind > 1) fail(ErrorCode::Io, "dwmap: bad kind byte");
    if (h < 2 || w < 2 || h > (1u << 16) || w > (1u << 16)) fail(ErrorCode::Io, "dwmap: bad dimensions");
    r.need(static_cast<std::size_t>(h) * w * 8);
    CoordMap map(static_cast<int>(h), static_cast<int>(w), static_cast<MapKind>(kind));
    for (double& c : map.coords()) c = r.f32();
    if (!r.at_end()) fail(ErrorCode::Io, "dwmap: trailing bytes");
    return map;
}

void write_dwmap(const fs::path& path, const CoordMap& map) {
    const auto bytes = encode_dwmap(map);
    write_atomic(path, [&](const fs::path& tmp) { write_bytes(tmp, bytes); });
}

CoordMap read_dwmap(const fs::path& path) { return decode_dwmap(read_bytes(path)); }

std::vector<unsigned char> encode_dwf32(const RasterF32& raster) {
    std::vector<unsigned char> out{'D', 'W', 'F', '0'};
    out.reserve(16 + raster.data().size() * 4);
    put_u32(out, static_cast<std::uint32_t>(raster.height()));
    put_u32(out, static_cast<std::uint32_t>(raster.width()));
    put_u32(out, static_cast<std::uint32_t>(raster.channels()));
    for (float v : raster.data()) put_f32(out, v);
    return out;
}

RasterF32 decode_dwf32(const std::vector<unsigned char>& bytes) {
    Reader r(bytes, "dwf32");
    r.magic("DWF0");
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    const std::uint32_t c = r.u32();
    if (h == 0 || w == 0 || c == 0 || h > (1u << 16) || w > (1u << 16) || c > 64) {
        fail(ErrorCode::Io, "dwf32: bad dimensions");
    }
    r.need(static_cast<std::size_t>(h) * w * c * 4);
    RasterF32 raster(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (float& v : raster.data()) v = r.f32();
    if (!r.at_end()) fail(ErrorCode::Io, "dwf32: trailing bytes");
    return raster;
}

void write_dwf32(const fs::path& path, const RasterF32& raster) {
    const auto bytes = encode_dwf32(raster);
    write_atomic(path, [&](const fs::path& tmp) { write_bytes(tmp, bytes); });
}

RasterF32 read_dwf32(const fs::path& path) { return decode_dwf32(read_bytes(path)); }

}  // namespace dewarp::io

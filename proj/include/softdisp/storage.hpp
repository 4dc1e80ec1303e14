#pragma once

// Bit-exact file codecs. These byte layouts are the toolkit's external
// interface; nothing here may depend on host endianness.
//
//   PFM       grayscale "Pf" portable float map, 32-bit floats, rows stored
//             bottom-to-top, negative scale = little-endian payload. The
//             color "PF" variant is rejected: disparity is scalar.
//   KITTI PNG 16-bit single-channel PNG storing round(disp * 256); the
//             stored value 0 marks an invalid pixel, so disparities that
//             quantize to 0 decode as invalid. Finer than 1/256 px needs PFM.
//   PGM       binary P5, 8-bit, for grayscale images and uncertainty renders.
//   RawVolume self-describing cost-volume dump (magic, dims, dtype,
//             endianness) with a row-major payload; float64 mode is lossless.
//
// Decoders never crash on malformed bytes: every failure is a format_error.

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/matcher.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

enum class FileFormat { PFM, KittiPng16, PGM, RawVolume };

/// Maps a file path to its codec by extension: .pfm, .png, .pgm, .bin.
inline FileFormat format_from_path(const std::string& path) {
    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".pfm") return FileFormat::PFM;
    if (ext == ".png") return FileFormat::KittiPng16;
    if (ext == ".pgm") return FileFormat::PGM;
    if (ext == ".bin") return FileFormat::RawVolume;
    throw invalid_input_error("cannot infer file format from '" + path +
                              "' (use .pfm, .png, .pgm, or .bin)");
}

// ---------------------------------------------------------------------------
// Byte helpers (explicit byte order, host-agnostic).

namespace detail {

inline void put_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}
inline std::uint32_t get_u32be(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
           (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}
inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}

inline void put_f32(std::vector<std::uint8_t>& out, float v, bool little_endian) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    if (little_endian)
        put_u32le(out, bits);
    else
        put_u32be(out, bits);
}
inline float get_f32(const std::uint8_t* p, bool little_endian) {
    return std::bit_cast<float>(little_endian ? get_u32le(p) : get_u32be(p));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// File I/O helpers.

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input_error("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw invalid_input_error("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw invalid_input_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// PFM.

inline std::vector<std::uint8_t> pfm_encode(const DisparityMap& map) {
    for (double v : map.values)
        if (!std::isfinite(v)) throw invalid_input_error("pfm_encode: non-finite value");
    std::vector<std::uint8_t> out;
    const std::string header =
        "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    out.insert(out.end(), header.begin(), header.end());
    for (int r = map.height - 1; r >= 0; --r)  // bottom row first
        for (int c = 0; c < map.width; ++c)
            detail::put_f32(out, static_cast<float>(map.at(r, c)), /*little_endian=*/true);
    return out;
}

namespace detail {

struct TokenReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    static bool is_space(std::uint8_t b) {
        return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\f' || b == '\v';
    }
    std::string next_token() {
        while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
        std::string tok;
        while (pos < bytes.size() && !is_space(bytes[pos])) tok.push_back(bytes[pos++]);
        return tok;
    }
    /// Consumes the single whitespace byte that separates header from payload.
    void skip_one_space() {
        if (pos < bytes.size() && is_space(bytes[pos])) ++pos;
    }
};

inline int parse_dim(const std::string& tok, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw format_error(std::string("malformed ") + what + " in header: '" + tok + "'");
    }
}

}  // namespace detail

inline DisparityMap pfm_decode(std::span<const std::uint8_t> bytes) {
    detail::TokenReader rd{bytes};
    const std::string magic = rd.next_token();
    if (magic == "PF")
        throw format_error("color 'PF' PFM is not supported; disparity maps are grayscale 'Pf'");
    if (magic != "Pf") throw format_error("not a PFM stream (bad magic '" + magic + "')");
    const int w = detail::parse_dim(rd.next_token(), "width");
    const int h = detail::parse_dim(rd.next_token(), "height");
    const std::string scale_tok = rd.next_token();
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw format_error("malformed scale in header: '" + scale_tok + "'");
    }
    if (scale == 0.0) throw format_error("PFM scale must be nonzero");
    const bool little_endian = scale < 0.0;
    rd.skip_one_space();

    const std::size_t need = static_cast<std::size_t>(w) * h * 4;
    if (bytes.size() - rd.pos < need)
        throw format_error("truncated PFM payload: need " + std::to_string(need) + " bytes, have " +
                           std::to_string(bytes.size() - rd.pos));
    DisparityMap map(h, w);
    const std::uint8_t* p = bytes.data() + rd.pos;
    for (int r = h - 1; r >= 0; --r)
        for (int c = 0; c < w; ++c, p += 4)
            map.at(r, c) = static_cast<double>(detail::get_f32(p, little_endian));
    return map;
}

inline void pfm_write(const DisparityMap& map, const std::string& path) {
    const auto bytes = pfm_encode(map);
    write_file(path, bytes);
}
inline DisparityMap pfm_read(const std::string& path) { return pfm_decode(read_file(path)); }

// ---------------------------------------------------------------------------
// PGM (binary P5, 8-bit).

inline std::vector<std::uint8_t> pgm_encode(const Image8& img) {
    std::vector<std::uint8_t> out;
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline Image8 pgm_decode(std::span<const std::uint8_t> bytes) {
    detail::TokenReader rd{bytes};
    if (rd.next_token() != "P5") throw format_error("not a binary PGM stream");
    const int w = detail::parse_dim(rd.next_token(), "width");
    const int h = detail::parse_dim(rd.next_token(), "height");
    const std::string maxval = rd.next_token();
    if (maxval != "255") throw format_error("only 8-bit PGM is supported (maxval 255)");
    rd.skip_one_space();
    const std::size_t need = static_cast<std::size_t>(w) * h;
    if (bytes.size() - rd.pos < need) throw format_error("truncated PGM payload");
    Image8 img(h, w);
    std::memcpy(img.pixels.data(), bytes.data() + rd.pos, need);
    return img;
}

inline void pgm_write(const Image8& img, const std::string& path) {
    const auto bytes = pgm_encode(img);
    write_file(path, bytes);
}
inline Image8 pgm_read(const std::string& path) { return pgm_decode(read_file(path)); }

// ---------------------------------------------------------------------------
// Minimal PNG container (16-bit grayscale only), zlib-compressed.

namespace detail {

inline void put_png_chunk(std::vector<std::uint8_t>& out, const char type[4],
                          std::span<const std::uint8_t> data) {
    put_u32be(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    const auto crc =
        static_cast<std::uint32_t>(::crc32(0L, body.data(), static_cast<uInt>(body.size())));
    put_u32be(out, crc);
}

inline std::vector<std::uint8_t> zlib_compress(std::span<const std::uint8_t> raw) {
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (::compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                    Z_DEFAULT_COMPRESSION) != Z_OK)
        throw format_error("zlib compression failed");
    out.resize(bound);
    return out;
}

inline std::vector<std::uint8_t> zlib_uncompress(std::span<const std::uint8_t> comp,
                                                 std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    const int rc = ::uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size()));
    if (rc != Z_OK || len != expected) throw format_error("corrupt PNG pixel stream");
    return out;
}

inline constexpr std::uint8_t kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

/// Reverses PNG scanline filters in place. bpp = bytes per pixel.
inline void unfilter_scanlines(std::vector<std::uint8_t>& raw, int height, int stride, int bpp) {
    for (int y = 0; y < height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        const std::uint8_t filter = row[0];
        std::uint8_t* cur = row + 1;
        const std::uint8_t* up =
            y > 0 ? raw.data() + static_cast<std::size_t>(y - 1) * (stride + 1) + 1 : nullptr;
        switch (filter) {
            case 0: break;
            case 1:
                for (int i = bpp; i < stride; ++i) cur[i] += cur[i - bpp];
                break;
            case 2:
                if (up)
                    for (int i = 0; i < stride; ++i) cur[i] += up[i];
                break;
            case 3:
                for (int i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int above = up ? up[i] : 0;
                    cur[i] += static_cast<std::uint8_t>((left + above) / 2);
                }
                break;
            case 4:
                for (int i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int above = up ? up[i] : 0;
                    const int upleft = (up && i >= bpp) ? up[i - bpp] : 0;
                    cur[i] += static_cast<std::uint8_t>(paeth(left, above, upleft));
                }
                break;
            default: throw format_error("unknown PNG filter type " + std::to_string(filter));
        }
    }
}

}  // namespace detail

/// Encodes round(disp * 256) into a 16-bit grayscale PNG; invalid pixels
/// store 0. Valid disparities must lie in [0, 256) and not round past the
/// 16-bit range.
inline std::vector<std::uint8_t> kitti_png_encode(const DisparityMap& map,
                                                  const ValidityMask& mask) {
    if (mask.height != map.height || mask.width != map.width)
        throw invalid_input_error("kitti_png_encode: mask shape mismatch");
    const int stride = map.width * 2;
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(map.height) * (stride + 1));
    for (int r = 0; r < map.height; ++r) {
        raw.push_back(0);  // filter type none
        for (int c = 0; c < map.width; ++c) {
            std::uint16_t stored = 0;
            if (mask.at(r, c)) {
                const double d = map.at(r, c);
                if (!(d >= 0.0) || d >= 256.0)
                    throw invalid_input_error(
                        "kitti_png_encode: disparity " + std::to_string(d) +
                        " outside the encodable range [0, 256)");
                const long v = std::lround(d * 256.0);
                if (v > 65535)
                    throw invalid_input_error("kitti_png_encode: disparity " + std::to_string(d) +
                                              " rounds past the 16-bit range");
                stored = static_cast<std::uint16_t>(v);
            }
            raw.push_back(static_cast<std::uint8_t>(stored >> 8));
            raw.push_back(static_cast<std::uint8_t>(stored & 0xff));
        }
    }

    std::vector<std::uint8_t> out(detail::kPngSignature, detail::kPngSignature + 8);
    std::vector<std::uint8_t> ihdr;
    detail::put_u32be(ihdr, static_cast<std::uint32_t>(map.width));
    detail::put_u32be(ihdr, static_cast<std::uint32_t>(map.height));
    ihdr.push_back(16);  // bit depth
    ihdr.push_back(0);   // color type: grayscale
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    detail::put_png_chunk(out, "IHDR", ihdr);
    detail::put_png_chunk(out, "IDAT", detail::zlib_compress(raw));
    detail::put_png_chunk(out, "IEND", {});
    return out;
}

inline std::pair<DisparityMap, ValidityMask> kitti_png_decode(
    std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), detail::kPngSignature, 8) != 0)
        throw format_error("not a PNG stream (bad signature)");

    int width = 0, height = 0;
    bool have_ihdr = false;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = detail::get_u32be(bytes.data() + pos);
        if (pos + 12 + static_cast<std::size_t>(len) > bytes.size())
            throw format_error("truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw format_error("malformed IHDR");
            width = static_cast<int>(detail::get_u32be(data));
            height = static_cast<int>(detail::get_u32be(data + 4));
            const int bit_depth = data[8], color_type = data[9];
            if (bit_depth != 16 || color_type != 0)
                throw format_error("only 16-bit grayscale PNG is supported (got depth " +
                                   std::to_string(bit_depth) + ", color type " +
                                   std::to_string(color_type) + ")");
            if (data[10] != 0 || data[11] != 0 || data[12] != 0)
                throw format_error("unsupported PNG compression/filter/interlace mode");
            if (width < 1 || height < 1 ||
                static_cast<std::uint64_t>(width) * height > (1u << 28))
                throw format_error("bad PNG dimensions");
            have_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + static_cast<std::size_t>(len);
    }
    if (!have_ihdr) throw format_error("PNG stream has no IHDR");
    if (idat.empty()) throw format_error("PNG stream has no IDAT");

    const int stride = width * 2;
    auto raw = detail::zlib_uncompress(
        idat, static_cast<std::size_t>(height) * (stride + 1));
    detail::unfilter_scanlines(raw, height, stride, /*bpp=*/2);

    DisparityMap map(height, width);
    ValidityMask mask(height, width, false);
    for (int r = 0; r < height; ++r) {
        const std::uint8_t* row = raw.data() + static_cast<std::size_t>(r) * (stride + 1) + 1;
        for (int c = 0; c < width; ++c) {
            const std::uint16_t v =
                static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
            if (v != 0) {
                map.at(r, c) = static_cast<double>(v) / 256.0;
                mask.at(r, c) = 1;
            }
        }
    }
    return {std::move(map), std::move(mask)};
}

inline void kitti_png_write(const DisparityMap& map, const ValidityMask& mask,
                            const std::string& path) {
    const auto bytes = kitti_png_encode(map, mask);
    write_file(path, bytes);
}
inline std::pair<DisparityMap, ValidityMask> kitti_png_read(const std::string& path) {
    return kitti_png_decode(read_file(path));
}

// ---------------------------------------------------------------------------
// RawVolume.

enum class VolumeDtype : std::uint8_t { F64 = 1, F32 = 2 };

namespace detail {
inline constexpr char kRawVolumeMagic[8] = {'S', 'D', 'R', 'V', 'O', 'L', '0', '1'};
}

/// Header: 8-byte magic, dtype byte, payload-endianness byte ('L'/'B'),
/// then height/width/d_max as little-endian u32. Payload is row-major
/// (row, col, hypothesis). Writers always emit little-endian; readers accept
/// both. F64 round-trips losslessly; F32 is a storage-saving mode that
/// quantizes to single precision.
inline std::vector<std::uint8_t> raw_volume_encode(const CostVolume& vol,
                                                   VolumeDtype dtype = VolumeDtype::F64) {
    vol.check_shape();
    std::vector<std::uint8_t> out(detail::kRawVolumeMagic, detail::kRawVolumeMagic + 8);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back('L');
    detail::put_u32le(out, static_cast<std::uint32_t>(vol.height));
    detail::put_u32le(out, static_cast<std::uint32_t>(vol.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(vol.d_max));
    if (dtype == VolumeDtype::F64) {
        for (double v : vol.costs) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            detail::put_u32le(out, static_cast<std::uint32_t>(bits & 0xffffffffu));
            detail::put_u32le(out, static_cast<std::uint32_t>(bits >> 32));
        }
    } else {
        for (double v : vol.costs) detail::put_f32(out, static_cast<float>(v), true);
    }
    return out;
}

inline CostVolume raw_volume_decode(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t header = 8 + 1 + 1 + 12;
    if (bytes.size() < header) throw format_error("truncated RawVolume header");
    if (std::memcmp(bytes.data(), detail::kRawVolumeMagic, 8) != 0)
        throw format_error("not a RawVolume stream (bad magic)");
    const auto dtype = static_cast<VolumeDtype>(bytes[8]);
    if (dtype != VolumeDtype::F64 && dtype != VolumeDtype::F32)
        throw format_error("unknown RawVolume dtype " + std::to_string(bytes[8]));
    const std::uint8_t endian = bytes[9];
    if (endian != 'L' && endian != 'B')
        throw format_error("unknown RawVolume endianness marker");
    const bool little = endian == 'L';
    const auto h = static_cast<int>(detail::get_u32le(bytes.data() + 10));
    const auto w = static_cast<int>(detail::get_u32le(bytes.data() + 14));
    const auto dmax = static_cast<int>(detail::get_u32le(bytes.data() + 18));
    if (h < 1 || w < 1 || dmax < 1) throw format_error("bad RawVolume dimensions");

    const std::size_t count = static_cast<std::size_t>(h) * w * (dmax + 1);
    const std::size_t value_size = dtype == VolumeDtype::F64 ? 8 : 4;
    if (bytes.size() - header != count * value_size)
        throw format_error("RawVolume payload size mismatch: expected " +
                           std::to_string(count * value_size) + " bytes, have " +
                           std::to_string(bytes.size() - header));

    CostVolume vol(h, w, dmax);
    const std::uint8_t* p = bytes.data() + header;
    if (dtype == VolumeDtype::F64) {
        for (std::size_t i = 0; i < count; ++i, p += 8) {
            const std::uint32_t lo = little ? detail::get_u32le(p) : detail::get_u32be(p + 4);
            const std::uint32_t hi = little ? detail::get_u32le(p + 4) : detail::get_u32be(p);
            vol.costs[i] = std::bit_cast<double>((std::uint64_t{hi} << 32) | lo);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i, p += 4)
            vol.costs[i] = static_cast<double>(detail::get_f32(p, little));
    }
    return vol;
}

inline void raw_volume_write(const CostVolume& vol, const std::string& path,
                             VolumeDtype dtype = VolumeDtype::F64) {
    const auto bytes = raw_volume_encode(vol, dtype);
    write_file(path, bytes);
}
inline CostVolume raw_volume_read(const std::string& path) {
    return raw_volume_decode(read_file(path));
}

}  // namespace softdisp

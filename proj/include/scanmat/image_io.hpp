#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "scanmat/texture.hpp"

namespace scanmat::io {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Declared transfer function of an image file. Inputs flagged srgb are
// linearized with the standard sRGB EOTF on load; all math is linear light.
enum class Transfer { linear, srgb };

inline double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double srgb_encode(double c) {
  c = std::clamp(c, 0.0, 1.0);
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

inline std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw io_error("png: deflate failed");
  out.resize(bound);
  return out;
}

inline std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* src,
                                                 std::size_t len,
                                                 std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw io_error("png: inflate init failed");
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(len);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.avail_out != 0)
    throw io_error("png: corrupt compressed stream");
  return out;
}

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw io_error("short write to " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

// Writes grayscale or RGB PNG at 8 or 16 bits. Values are clamped to [0,1]
// and encoded with the requested transfer. Output bytes are deterministic.
inline void save_png(const TextureMap& img, const std::filesystem::path& path,
                     Transfer transfer = Transfer::linear, int bit_depth = 16) {
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("png: bit depth must be 8 or 16");
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("png: 1 or 3 channels expected");
  const int w = img.width, h = img.height, ch = img.channels;
  const int bytes_per_sample = bit_depth / 8;
  const std::size_t stride = static_cast<std::size_t>(w) * ch * bytes_per_sample;
  std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(h));
  const double peak = bit_depth == 8 ? 255.0 : 65535.0;
  std::size_t pos = 0;
  for (int y = 0; y < h; ++y) {
    raw[pos++] = 0;  // filter: none
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        if (transfer == Transfer::srgb) v = srgb_encode(v);
        auto q = static_cast<std::uint32_t>(std::lround(v * peak));
        if (bit_depth == 16) raw[pos++] = static_cast<std::uint8_t>(q >> 8);
        raw[pos++] = static_cast<std::uint8_t>(q & 0xff);
      }
  }
  std::vector<std::uint8_t> ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(w));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
  ihdr.push_back(ch == 1 ? 0 : 2);  // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  detail::append_chunk(file, "IHDR", ihdr);
  detail::append_chunk(file, "IDAT", detail::zlib_compress(raw));
  detail::append_chunk(file, "IEND", {});
  detail::write_file_bytes(path, file.data(), file.size());
}

// Reads 8/16-bit grayscale, gray+alpha, RGB or RGBA PNG (alpha is dropped).
// Palette and interlaced files are rejected. ppi metadata defaults to 300
// and is owned by the caller's manifest, not the file.
inline TextureMap load_png(const std::filesystem::path& path,
                           Transfer transfer = Transfer::linear) {
  auto file = detail::read_file_bytes(path);
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw io_error(path.string() + ": not a png");
  std::size_t pos = 8;
  int w = 0, h = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> idat;
  while (pos + 12 <= file.size()) {
    std::uint32_t len = detail::get_u32_be(&file[pos]);
    std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    if (pos + 12 + len > file.size()) throw io_error(path.string() + ": truncated png");
    const std::uint8_t* payload = &file[pos + 8];
    if (type == "IHDR") {
      if (len != 13) throw io_error(path.string() + ": bad IHDR");
      w = static_cast<int>(detail::get_u32_be(payload));
      h = static_cast<int>(detail::get_u32_be(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[12] != 0) throw io_error(path.string() + ": interlaced png unsupported");
      if (bit_depth != 8 && bit_depth != 16)
        throw io_error(path.string() + ": only 8/16-bit png supported");
      if (color_type != 0 && color_type != 2 && color_type != 4 && color_type != 6)
        throw io_error(path.string() + ": palette png unsupported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || idat.empty()) throw io_error(path.string() + ": empty png");
  const int file_ch = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
  const int bps = bit_depth / 8;
  const std::size_t stride = static_cast<std::size_t>(w) * file_ch * bps;
  auto raw = detail::zlib_decompress(idat.data(), idat.size(), (stride + 1) * h);

  // Undo scanline filters in place, then decode samples.
  const int bpp = file_ch * bps;
  std::vector<std::uint8_t> prev(stride, 0);
  TextureMap img(w, h, file_ch >= 3 ? 3 : 1, 300.0);
  const double peak = bit_depth == 8 ? 255.0 : 65535.0;
  for (int y = 0; y < h; ++y) {
    std::uint8_t* line = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    std::uint8_t filter = line[0];
    std::uint8_t* cur = line + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
      int b = prev[i];
      int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
      int add = 0;
      switch (filter) {
        case 0: add = 0; break;
        case 1: add = a; break;
        case 2: add = b; break;
        case 3: add = (a + b) / 2; break;
        case 4: add = detail::paeth(a, b, c); break;
        default: throw io_error(path.string() + ": bad png filter");
      }
      cur[i] = static_cast<std::uint8_t>((cur[i] + add) & 0xff);
    }
    std::memcpy(prev.data(), cur, stride);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const std::uint8_t* s = cur + (static_cast<std::size_t>(x) * file_ch + c) * bps;
        double v = bit_depth == 8 ? s[0] / peak : ((s[0] << 8) | s[1]) / peak;
        if (transfer == Transfer::srgb) v = srgb_decode(v);
        img.at(x, y, c) = v;
      }
  }
  return img;
}

// ---------------------------------------------------------------------------
// EXR (write-only, uncompressed 32-bit float)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  put_bytes(out, &v, sizeof(T));  // little-endian host assumed
}

inline void put_cstr(std::vector<std::uint8_t>& out, const char* s) {
  put_bytes(out, s, std::strlen(s) + 1);
}

inline void put_attr(std::vector<std::uint8_t>& out, const char* name,
                     const char* type, const std::vector<std::uint8_t>& v) {
  put_cstr(out, name);
  put_cstr(out, type);
  put_le<std::int32_t>(out, static_cast<std::int32_t>(v.size()));
  put_bytes(out, v.data(), v.size());
}

}  // namespace detail

// Linear float output for render results. One scanline per block,
// NO_COMPRESSION, channels in the required alphabetical order.
inline void save_exr(const TextureMap& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("exr: 1 or 3 channels expected");
  const int w = img.width, h = img.height;
  const std::vector<std::pair<const char*, int>> chans =
      img.channels == 1 ? std::vector<std::pair<const char*, int>>{{"Y", 0}}
                        : std::vector<std::pair<const char*, int>>{
                              {"B", 2}, {"G", 1}, {"R", 0}};
  std::vector<std::uint8_t> out;
  detail::put_le<std::uint32_t>(out, 20000630u);  // magic
  detail::put_le<std::uint32_t>(out, 2u);         // version, scanline file

  std::vector<std::uint8_t> chlist;
  for (auto& [name, src] : chans) {
    detail::put_cstr(chlist, name);
    detail::put_le<std::int32_t>(chlist, 2);  // FLOAT
    detail::put_le<std::uint32_t>(chlist, 0);
    detail::put_le<std::int32_t>(chlist, 1);
    detail::put_le<std::int32_t>(chlist, 1);
  }
  chlist.push_back(0);
  detail::put_attr(out, "channels", "chlist", chlist);
  detail::put_attr(out, "compression", "compression", {0});
  std::vector<std::uint8_t> box;
  detail::put_le<std::int32_t>(box, 0);
  detail::put_le<std::int32_t>(box, 0);
  detail::put_le<std::int32_t>(box, w - 1);
  detail::put_le<std::int32_t>(box, h - 1);
  detail::put_attr(out, "dataWindow", "box2i", box);
  detail::put_attr(out, "displayWindow", "box2i", box);
  detail::put_attr(out, "lineOrder", "lineOrder", {0});
  std::vector<std::uint8_t> f1;
  detail::put_le<float>(f1, 1.0f);
  detail::put_attr(out, "pixelAspectRatio", "float", f1);
  std::vector<std::uint8_t> v2;
  detail::put_le<float>(v2, 0.0f);
  detail::put_le<float>(v2, 0.0f);
  detail::put_attr(out, "screenWindowCenter", "v2f", v2);
  detail::put_attr(out, "screenWindowWidth", "float", f1);
  out.push_back(0);  // end of header

  const std::size_t line_data = static_cast<std::size_t>(w) * img.channels * 4;
  std::uint64_t offset = out.size() + static_cast<std::size_t>(h) * 8;
  for (int y = 0; y < h; ++y) {
    detail::put_le<std::uint64_t>(out, offset);
    offset += 8 + line_data;
  }
  for (int y = 0; y < h; ++y) {
    detail::put_le<std::int32_t>(out, y);
    detail::put_le<std::int32_t>(out, static_cast<std::int32_t>(line_data));
    for (auto& [name, src] : chans)
      for (int x = 0; x < w; ++x)
        detail::put_le<float>(out, static_cast<float>(img.at(x, y, src)));
  }
  detail::write_file_bytes(path, out.data(), out.size());
}

}  // namespace scanmat::io

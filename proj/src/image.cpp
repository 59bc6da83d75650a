// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/image.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace iblkit {

void write_pfm(const Image& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("write_pfm: expected 1 or 3 channels");
  if (!img.finite()) throw std::runtime_error("write_pfm: non-finite pixels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pfm: cannot open " + path);
  os << (img.channels() == 3 ? "PF" : "Pf") << '\n'
     << img.width << ' ' << img.height << '\n'
     << "-1.0" << '\n';
  std::vector<float> row(size_t(img.width) * img.channels());
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[size_t(x) * img.channels() + c] = img.planes[size_t(c)](y, x);
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * 4));
  }
  if (!os) throw std::runtime_error("write_pfm: write failed for " + path);
}

Image read_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string tag;
  is >> tag;
  int channels;
  if (tag == "PF")
    channels = 3;
  else if (tag == "Pf")
    channels = 1;
  else
    throw std::runtime_error("read_pfm: malformed header in " + path);
  int w = 0, h = 0;
  double scale = 0;
  is >> w >> h >> scale;
  if (!is || w <= 0 || h <= 0 || scale == 0)
    throw std::runtime_error("read_pfm: malformed header in " + path);
  if (scale > 0) throw std::runtime_error("read_pfm: big-endian PFM not supported");
  is.get();  // single whitespace byte after the scale
  Image img = Image::zeros(w, h, channels);
  std::vector<float> row(size_t(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * 4));
    if (!is) throw std::runtime_error("read_pfm: truncated payload in " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) img.planes[size_t(c)](y, x) = row[size_t(x) * channels + c];
  }
  return img;
}

// ---------------------------------------------------------------------------
// Minimal PNG writer: 8-bit RGB, zlib stream with stored deflate blocks.

namespace {

std::uint32_t crc32(const unsigned char* data, size_t n, std::uint32_t crc = 0) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  crc ^= 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

void put_chunk(std::ostream& os, const char type[4], const std::string& data) {
  std::string head;
  put_be32(head, std::uint32_t(data.size()));
  os.write(head.data(), 4);
  std::string body(type, 4);
  body += data;
  os.write(body.data(), std::streamsize(body.size()));
  std::string crc;
  put_be32(crc, crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size()));
  os.write(crc.data(), 4);
}

}  // namespace

void export_png(const Image& img, const std::string& path) {
  if (!img.finite()) throw std::runtime_error("export_png: non-finite pixels");
  const int w = img.width, h = img.height;
  // Filter byte 0 per scanline, RGB8.
  std::string raw;
  raw.reserve(size_t(h) * (1 + size_t(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');
    for (int x = 0; x < w; ++x) {
      const Rgbf v = img.rgb(y, x);
      for (int c = 0; c < 3; ++c) {
        const float g = std::pow(clamp01(v(c)), 1.0f / 2.2f);
        raw.push_back(char(int(std::lround(g * 255.0f))));
      }
    }
  }

  std::uint32_t a1 = 1, a2 = 0;  // adler-32
  for (unsigned char c : raw) {
    a1 = (a1 + c) % 65521;
    a2 = (a2 + a1) % 65521;
  }

  std::string idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    const size_t len = std::min<size_t>(65535, raw.size() - off);
    const bool final = off + len == raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(char(len & 0xFF));
    idat.push_back(char(len >> 8));
    idat.push_back(char(~len & 0xFF));
    idat.push_back(char((~len >> 8) & 0xFF));
    idat.append(raw, off, len);
    off += len;
    if (raw.empty()) break;
  }
  put_be32(idat, (a2 << 16) | a1);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_png: cannot open " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  os.write(reinterpret_cast<const char*>(sig), 8);
  std::string ihdr;
  put_be32(ihdr, std::uint32_t(w));
  put_be32(ihdr, std::uint32_t(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(os, "IHDR", ihdr);
  put_chunk(os, "IDAT", idat);
  put_chunk(os, "IEND", "");
  if (!os) throw std::runtime_error("export_png: write failed for " + path);
}

float psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels() != b.channels())
    throw std::invalid_argument("psnr: image shape mismatch");
  double mse = 0;
  for (int c = 0; c < a.channels(); ++c)
    mse += double((a.planes[size_t(c)] - b.planes[size_t(c)]).square().mean());
  mse /= a.channels();
  if (mse <= 0) return std::numeric_limits<float>::infinity();
  return float(-10.0 * std::log10(mse));
}

float mean_abs_error(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels() != b.channels())
    throw std::invalid_argument("mean_abs_error: image shape mismatch");
  double mae = 0;
  for (int c = 0; c < a.channels(); ++c)
    mae += double((a.planes[size_t(c)] - b.planes[size_t(c)]).abs().mean());
  return float(mae / a.channels());
}

}  // namespace iblkit

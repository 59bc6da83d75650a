// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "iblkit/image.hpp"

using namespace iblkit;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("pfm roundtrip is bitwise for color and gray") {
  Prng rng(8);
  for (int channels : {1, 3}) {
    Image img = Image::zeros(19, 7, channels);
    for (auto& p : img.planes)
      p = Eigen::ArrayXXf::NullaryExpr(7, 19, [&] { return 10.0f * rng.next_float() - 5.0f; });
    const std::string path = temp_path("iblkit_test.pfm");
    write_pfm(img, path);
    const Image back = read_pfm(path);
    REQUIRE(back.channels() == channels);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    for (int c = 0; c < channels; ++c) CHECK((back.planes[c] == img.planes[c]).all());
    std::filesystem::remove(path);
  }
}

TEST_CASE("pfm error paths") {
  const std::string path = temp_path("iblkit_bad.pfm");
  std::ofstream(path) << "P6\n1 1\n255\n";
  CHECK_THROWS_AS(read_pfm(path), std::runtime_error);

  Image img = Image::zeros(2, 2, 1);
  img.planes[0](0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(write_pfm(img, path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("png export gamma mapping") {
  Image img = Image::zeros(2, 1, 3);
  img.set_rgb(0, 0, Rgbf::Constant(1.0f));
  img.set_rgb(0, 1, Rgbf::Constant(0.5f));
  const std::string path = temp_path("iblkit_test.png");
  export_png(img, path);

  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  REQUIRE(bytes.size() > 60);
  CHECK(bytes.compare(1, 3, "PNG") == 0);
  // IDAT payload: 2 zlib header bytes, 5 stored-block header bytes, then the
  // scanline: filter byte + RGB RGB.
  const size_t idat = bytes.find("IDAT");
  REQUIRE(idat != std::string::npos);
  const unsigned char* px = reinterpret_cast<const unsigned char*>(bytes.data() + idat + 4 + 7 + 1);
  CHECK(int(px[0]) == 255);  // gamma(1.0) = 1.0
  CHECK(int(px[3]) == 186);  // round(255 * 0.5^(1/2.2))
  std::filesystem::remove(path);
}

TEST_CASE("psnr and mae") {
  Image a = Image::zeros(4, 4, 3);
  Image b = Image::zeros(4, 4, 3);
  for (auto& p : b.planes) p.setConstant(0.1f);
  CHECK(psnr(a, a) == std::numeric_limits<float>::infinity());
  CHECK(psnr(a, b) == doctest::Approx(20.0f).epsilon(1e-4));
  CHECK(mean_abs_error(a, b) == doctest::Approx(0.1f).epsilon(1e-5));
}

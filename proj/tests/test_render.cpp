#include <gtest/gtest.h>

#include <zlib.h>

#include "dense_ddu/render.hpp"
#include "test_util.hpp"

using namespace ddu;

namespace {

std::uint32_t be32(const std::vector<std::byte>& b, std::size_t off) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint32_t>(b[off + i]);
  return v;
}

/// Minimal decoder for 8-bit grayscale, filter-0 PNGs; checks every chunk CRC.
GrayImage decode_png(const std::vector<std::byte>& png) {
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  EXPECT_EQ(std::memcmp(png.data(), sig, 8), 0);
  GrayImage img;
  std::vector<Bytef> z;
  std::size_t off = 8;
  bool ended = false;
  while (off < png.size()) {
    const std::uint32_t len = be32(png, off);
    const std::string type(reinterpret_cast<const char*>(png.data()) + off + 4, 4);
    const auto* body = reinterpret_cast<const Bytef*>(png.data()) + off + 8;
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(png.data()) + off + 4, len + 4);
    EXPECT_EQ(crc, be32(png, off + 8 + len)) << type;
    if (type == "IHDR") {
      img.width = be32(png, off + 8);
      img.height = be32(png, off + 12);
      EXPECT_EQ(body[8], 8);   // depth
      EXPECT_EQ(body[9], 0);   // grayscale
      EXPECT_EQ(body[12], 0);  // not interlaced
    } else if (type == "IDAT") {
      z.insert(z.end(), body, body + len);
    } else if (type == "IEND") {
      ended = true;
    }
    off += 12 + len;
  }
  EXPECT_TRUE(ended);
  std::vector<Bytef> raw(img.height * (img.width + 1));
  uLongf raw_len = raw.size();
  EXPECT_EQ(uncompress(raw.data(), &raw_len, z.data(), z.size()), Z_OK);
  EXPECT_EQ(raw_len, raw.size());
  for (std::size_t r = 0; r < img.height; ++r) {
    EXPECT_EQ(raw[r * (img.width + 1)], 0);
    for (std::size_t c = 0; c < img.width; ++c) img.pixels.push_back(raw[r * (img.width + 1) + 1 + c]);
  }
  return img;
}

}  // namespace

TEST(Render, MinMaxMapsToFullRange) {
  const UncertaintyMap m(1, 3, {2.0, 3.0, 4.0}, Source::entropy);
  const auto img = render_map(m);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Render, ConstantMapIsMidGray) {
  const UncertaintyMap m(2, 2, {1.0, 1.0, 1.0, 1.0}, Source::entropy);
  EXPECT_EQ(render_map(m).pixels, std::vector<std::uint8_t>(4, 128));
}

TEST(Render, QuantileNormalizationClampsOutliers) {
  std::vector<double> v(101);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  v[100] = 1e9;
  const UncertaintyMap m(1, 101, v, Source::entropy);
  const auto img = render_map(m, Normalization::quantile(0.0, 0.5));
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[50], 255);
  EXPECT_EQ(img.pixels[100], 255);
  EXPECT_EQ(img.pixels[25], 128);
  EXPECT_THROW(render_map(m, Normalization::quantile(0.6, 0.5)), ConfigError);
}

TEST(Render, FixedBoundsShareScaleAcrossMaps) {
  const UncertaintyMap a(1, 2, {0.0, 1.0}, Source::entropy);
  const UncertaintyMap b(1, 2, {0.0, 0.5}, Source::entropy);
  const auto norm = Normalization::fixed(0.0, 1.0);
  EXPECT_EQ(render_map(a, norm).pixels[1], 255);
  EXPECT_EQ(render_map(b, norm).pixels[1], 128);
}

TEST(Render, AccuracyMap) {
  const LabelMap gt(1, 3, {0, 1, 255});
  const LabelMap pred(1, 3, {0, 0, 1});
  EXPECT_EQ(render_accuracy(pred, gt).pixels, (std::vector<std::uint8_t>{255, 0, 128}));
  EXPECT_THROW(render_accuracy(LabelMap(1, 2, {0, 0}), gt), ValidationError);
}

TEST(Render, MatrixUndefinedCellsAreBlack) {
  DistanceMatrix m{2, {0.0, 2.0, std::nullopt, 1.0}};
  EXPECT_EQ(render_matrix(m).pixels, (std::vector<std::uint8_t>{0, 255, 0, 128}));
}

TEST(Render, UpscaleRepeatsPixels) {
  GrayImage g{2, 1, {10, 20}};
  const auto up = upscale(g, 3);
  EXPECT_EQ(up.width, 6u);
  EXPECT_EQ(up.height, 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(up.at(r, c), c < 3 ? 10 : 20);
  }
}

TEST(Render, PngDecodesToSamePixels) {
  GrayImage g{7, 5, {}};
  for (std::size_t i = 0; i < 35; ++i) g.pixels.push_back(static_cast<std::uint8_t>(i * 7));
  const auto back = decode_png(encode_png(g));
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, g.pixels);
  EXPECT_THROW(encode_png(GrayImage{}), ValidationError);
}

TEST(Render, PgmLayout) {
  GrayImage g{2, 1, {1, 2}};
  const auto bytes = encode_pgm(g);
  const std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  EXPECT_EQ(s, std::string("P5\n2 1\n255\n\x01\x02", 13));
}

TEST(Render, WriteImagePicksFormatByExtension) {
  testutil::TempDir dir("render");
  GrayImage g{1, 1, {9}};
  write_image(dir / "a.png", g);
  write_image(dir / "a.pgm", g);
  EXPECT_EQ(static_cast<unsigned>(read_file(dir / "a.png")[1]), static_cast<unsigned>('P'));
  EXPECT_EQ(static_cast<unsigned>(read_file(dir / "a.pgm")[0]), static_cast<unsigned>('P'));
  EXPECT_EQ(decode_png(read_file(dir / "a.png")).pixels, g.pixels);
}

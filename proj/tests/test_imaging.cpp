// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "roentgen/imaging.hpp"

using namespace roentgen;

namespace {

std::string pgm(const std::string& header, std::initializer_list<int> px) {
  std::string s = header;
  for (int p : px) s.push_back(static_cast<char>(p));
  return s;
}

}  // namespace

TEST(DecodePgm, TwoByTwo) {
  const GrayImage img = decode_pgm(pgm("P5 2 2 255\n", {0, 64, 128, 255}));
  EXPECT_EQ(img, GrayImage(2, 2, {0, 64, 128, 255}));
  EXPECT_EQ(img.at(1, 0), 64);
  EXPECT_EQ(img.at(0, 1), 128);
}

TEST(DecodePgm, SinglePixelAndComments) {
  EXPECT_EQ(decode_pgm(pgm("P5\n1 1\n255\n", {0})), GrayImage(1, 1, std::uint8_t{0}));
  EXPECT_EQ(decode_pgm(pgm("P5\n# scanner\n2 # width\n1\n#x\n255\t", {7, 9})), GrayImage(2, 1, {7, 9}));
}

TEST(DecodePgm, RescalesSmallMaxval) {
  EXPECT_EQ(decode_pgm(pgm("P5 3 1 15\n", {0, 15, 5})), GrayImage(3, 1, {0, 255, 85}));
}

TEST(DecodePgm, Errors) {
  EXPECT_THROW(decode_pgm(pgm("P5 2 2 255\n", {0, 64, 128})), FormatError);
  EXPECT_THROW(decode_pgm(pgm("P2 1 1 255\n", {0})), FormatError);
  EXPECT_THROW(decode_pgm(pgm("P5 1 1 65535\n", {0, 0})), FormatError);
  EXPECT_THROW(decode_pgm(pgm("P5 1 1 200\n", {201})), FormatError);
  EXPECT_THROW(decode_pgm(pgm("P5 0 1 255\n", {})), FormatError);
  EXPECT_THROW(decode_pgm("P5 1"), FormatError);
  EXPECT_THROW(decode_pgm("\x01\x02\x03\x04"), FormatError);
}

TEST(DecodePgm, EncodeRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.below(20), h = 1 + rng.below(20);
    std::vector<std::uint8_t> px(w * h);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(256));
    const GrayImage img(w, h, px);
    EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
  }
}

TEST(ResizeBilinear, GoldenUpsample) {
  // Source coordinates for 2 -> 4 are 0, 0.25, 0.75, 1 (after clamping), and
  // the source is the plane 100 * (x + y).
  const GrayImage src(2, 2, {0, 100, 100, 200});
  const GrayImage want(4, 4, {0,  25,  75,  100,  //
                              25, 50,  100, 125,  //
                              75, 100, 150, 175,  //
                              100, 125, 175, 200});
  EXPECT_EQ(resize_bilinear(src, 4, 4), want);
}

TEST(ResizeBilinear, IdentityAndConstant) {
  Rng rng(4);
  std::vector<std::uint8_t> px(35);
  for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(256));
  const GrayImage img(7, 5, px);
  EXPECT_EQ(resize_bilinear(img, 7, 5), img);
  EXPECT_EQ(resize_bilinear(resize_bilinear(img, 7, 5), 7, 5), img);
  const GrayImage flat(9, 4, std::uint8_t{173});
  for (auto [w, h] : {std::pair{1, 1}, {3, 17}, {32, 32}, {5, 2}})
    EXPECT_EQ(resize_bilinear(flat, w, h), GrayImage(w, h, std::uint8_t{173}));
  EXPECT_THROW(resize_bilinear(flat, 0, 3), ArgumentError);
}

TEST(ToInputTensor, ScalingAndReplication) {
  const GrayImage img(2, 1, {255, 0});
  const Tensor t = to_input_tensor(img, 1, 2, 3);
  EXPECT_EQ(t.shape(), (Shape{1, 2, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(t.at(0, 0, c), 1.0);
    EXPECT_EQ(t.at(0, 1, c), 0.0);
  }
  EXPECT_THROW(to_input_tensor(img, 1, 2, 2), ArgumentError);
}

TEST(ToInputTensor, ValuesInUnitIntervalAndChannelsIdentical) {
  Rng rng(5);
  const GrayImage img = fixtures::bright_dark_image(40, true, rng);
  const Tensor t = to_input_tensor(img, 32, 24, 3);
  EXPECT_EQ(t.shape(), (Shape{32, 24, 3}));
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 24; ++x) {
      EXPECT_GE(t.at(y, x, 0), 0.0);
      EXPECT_LE(t.at(y, x, 0), 1.0);
      EXPECT_EQ(t.at(y, x, 0), t.at(y, x, 1));
      EXPECT_EQ(t.at(y, x, 1), t.at(y, x, 2));
    }
}

class Manifest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = fixtures::temp_dir("manifest"); }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  void put(const std::string& rel, const std::string& bytes) {
    std::filesystem::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel, std::ios::binary) << bytes;
  }

  std::filesystem::path dir_;
};

TEST_F(Manifest, CountsLabelsAndSortsById) {
  const std::string px = encode_pgm(GrayImage(1, 1, std::uint8_t{9}));
  for (auto name : {"c", "a", "b"}) put(std::string("pneumonic/") + name + ".pgm", px);
  for (auto name : {"z", "y"}) put(std::string("not_pneumonic/") + name + ".pgm", px);
  put("pneumonic/readme.txt", "ignored");
  const auto items = load_manifest(dir_);
  ASSERT_EQ(items.size(), 5u);
  std::vector<std::string> ids;
  for (const auto& it : items) ids.push_back(it.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"not_pneumonic/y", "not_pneumonic/z", "pneumonic/a", "pneumonic/b",
                                           "pneumonic/c"}));
  EXPECT_EQ(items[0].label, Label::not_pneumonic);
  EXPECT_EQ(items[4].label, Label::pneumonic);
}

TEST_F(Manifest, EmptyDirectoriesGiveEmptyList) {
  std::filesystem::create_directories(dir_ / "pneumonic");
  std::filesystem::create_directories(dir_ / "not_pneumonic");
  EXPECT_TRUE(load_manifest(dir_).empty());
  EXPECT_THROW(load_manifest(dir_ / "nope"), IoError);
}

TEST_F(Manifest, DuplicateStemsStayUnique) {
  const std::string px = encode_pgm(GrayImage(1, 1, std::uint8_t{1}));
  put("pneumonic/img1.pgm", px);
  put("not_pneumonic/img1.pgm", px);
  const auto items = load_manifest(dir_);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_NE(items[0].id, items[1].id);
}

TEST_F(Manifest, StrictnessControlsBadFiles) {
  put("pneumonic/good.pgm", encode_pgm(GrayImage(1, 1, std::uint8_t{1})));
  put("pneumonic/bad.pgm", "garbage");
  EXPECT_THROW(load_manifest(dir_, Strictness::strict), FormatError);
  const auto items = load_manifest(dir_, Strictness::lenient);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].id, "pneumonic/good");
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "radt/dataset.hpp"
#include "radt/image_io.hpp"

using namespace radt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("radt_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(ImageIo, PngRoundTripIsExactOnEightBitValues) {
  const auto dir = scratch("png");
  Tensor<float> img({5, 7, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float((i * 37) % 256) / 255.0f;
  write_png((dir / "a.png").string(), img);
  const auto back = read_png((dir / "a.png").string());
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back[i], img[i]);
}

TEST(ImageIo, ColourImageReadsAsGrayOrRgb) {
  const auto dir = scratch("rgb");
  Tensor<float> img({2, 2, 3}, 0.0f);
  for (std::size_t p = 0; p < 4; ++p) img[p * 3 + 1] = 1.0f;  // pure green
  write_png((dir / "g.png").string(), img);
  const auto rgb = read_png((dir / "g.png").string(), 3);
  EXPECT_EQ(rgb.shape(), (Shape{2, 2, 3}));
  EXPECT_EQ(rgb[1], 1.0f);
  const auto gray = read_png((dir / "g.png").string(), 1);
  EXPECT_EQ(gray.shape(), (Shape{2, 2, 1}));
  EXPECT_GT(gray[0], 0.3f);
  EXPECT_LT(gray[0], 1.0f);
}

TEST(ImageIo, UndecodableAndMissingFilesThrow) {
  const auto dir = scratch("bad");
  write_text(dir / "x.png", "definitely not a png");
  EXPECT_THROW((void)read_png((dir / "x.png").string()), ImageError);
  EXPECT_THROW((void)read_png((dir / "missing.png").string()), ImageError);
}

TEST(Resize, HalfPixelCentersMatchHandComputedValues) {
  Tensor<float> in({1, 2, 1}, {0.0f, 1.0f});
  const auto up = resize_bilinear(in, 1, 4);
  // output centers map to -0.25, 0.25, 0.75, 1.25 -> clamped to [0, 1]
  EXPECT_FLOAT_EQ(up[0], 0.0f);
  EXPECT_FLOAT_EQ(up[1], 0.25f);
  EXPECT_FLOAT_EQ(up[2], 0.75f);
  EXPECT_FLOAT_EQ(up[3], 1.0f);
  Tensor<float> four({1, 4, 1}, {0.0f, 1.0f, 2.0f, 3.0f});
  const auto down = resize_bilinear(four, 1, 2);  // centers at 0.5 and 2.5
  EXPECT_FLOAT_EQ(down[0], 0.5f);
  EXPECT_FLOAT_EQ(down[1], 2.5f);
}

TEST(Resize, ConstantImagesStayConstantAndSameSizeIsIdentity) {
  CounterRng rng(3);
  Tensor<float> img({9, 13, 2});
  for (auto& v : img.values()) v = float(rng.uniform());
  EXPECT_EQ(resize_bilinear(img, 9, 13).values(), img.values());
  Tensor<float> flat({9, 13, 1}, 0.375f);
  const auto stretched = resize_bilinear(flat, 31, 4);
  for (float v : stretched.values()) EXPECT_FLOAT_EQ(v, 0.375f);
}

TEST(Manifest, VocabularyIsSortedAndContiguous) {
  const auto dir = scratch("vocab");
  write_text(dir / "m.csv", "image_path,label\na.png,pneumonia\nb.png,normal\nc.png,pneumonia\n");
  const auto m = load_manifest((dir / "m.csv").string());
  EXPECT_EQ(m.n_classes(), 2u);
  EXPECT_EQ(m.vocabulary, (std::vector<std::string>{"normal", "pneumonia"}));
  EXPECT_EQ(m.label_index("normal"), 0u);
  EXPECT_EQ(m.label_index("pneumonia"), 1u);
  EXPECT_THROW((void)m.label_index("covid"), DataError);
}

TEST(Manifest, RegionAndSplitColumnsParseByName) {
  const auto dir = scratch("regions");
  write_text(dir / "m.csv",
             "label,split,image_path,cx,cy,h,w\n"
             "a,train,x.png,0.5,0.4,0.2,0.3\n"
             "b,val,\"dir,with,comma/y.png\",,,,\n");
  const auto m = load_manifest((dir / "m.csv").string());
  ASSERT_EQ(m.rows.size(), 2u);
  ASSERT_TRUE(m.rows[0].region.has_value());
  EXPECT_EQ(*m.rows[0].region, (AttentionRegion{0.5, 0.4, 0.2, 0.3}));
  EXPECT_FALSE(m.rows[1].region.has_value());
  EXPECT_EQ(m.rows[1].image_path, "dir,with,comma/y.png");
  EXPECT_EQ(split_of(m.rows[0]), Split::train);
  EXPECT_EQ(split_of(m.rows[1]), Split::val);
}

TEST(Manifest, MalformedInputsAreRejected) {
  const auto dir = scratch("malformed");
  write_text(dir / "empty.csv", "image_path,label\n");
  EXPECT_THROW((void)load_manifest((dir / "empty.csv").string()), DataError);
  write_text(dir / "nolabel.csv", "image_path\na.png\n");
  EXPECT_THROW((void)load_manifest((dir / "nolabel.csv").string()), DataError);
  write_text(dir / "ragged.csv", "image_path,label\na.png\n");
  EXPECT_THROW((void)load_manifest((dir / "ragged.csv").string()), DataError);
  write_text(dir / "partial.csv", "image_path,label,cx,cy\na.png,x,0.1,0.2\n");
  EXPECT_THROW((void)load_manifest((dir / "partial.csv").string()), DataError);
  write_text(dir / "badnum.csv", "image_path,label,cx,cy,h,w\na.png,x,0.1,zz,0.2,0.2\n");
  EXPECT_THROW((void)load_manifest((dir / "badnum.csv").string()), DataError);
  EXPECT_THROW((void)load_manifest((dir / "nothere.csv").string()), DataError);
}

TEST(Manifest, MissingImageFileIsReported) {
  const auto dir = scratch("missing_img");
  write_text(dir / "m.csv", "image_path,label\nnope.png,a\n");
  const auto m = load_manifest((dir / "m.csv").string());
  try {
    (void)load_images(m, dir.string(), 8, 1);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.png"), std::string::npos);
  }
}

TEST(Split, HashSplitIsDeterministicAndNearFifteenPercent) {
  std::size_t val = 0;
  for (int i = 0; i < 4000; ++i) {
    ManifestRow r{"images/" + std::to_string(i) + ".png", "a", std::nullopt, std::nullopt};
    const auto s = split_of(r);
    EXPECT_EQ(s, split_of(r));
    if (s == Split::val) ++val;
  }
  EXPECT_NEAR(double(val) / 4000.0, 0.15, 0.02);
}

TEST(Batches, SameSeedSameOrderAndEveryEpochIsAPermutation) {
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    const auto a = epoch_order(37, 11, epoch);
    EXPECT_EQ(a, epoch_order(37, 11, epoch));
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 37u);
  }
  EXPECT_NE(epoch_order(37, 11, 1), epoch_order(37, 11, 2));
  EXPECT_NE(epoch_order(37, 11, 1), epoch_order(37, 12, 1));
  const auto b = batches(epoch_order(10, 0, 0), 4);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].size(), 2u);
}

TEST(Gaze, CsvGroupsByImageAndKeepsOrder) {
  const auto dir = scratch("gaze");
  write_text(dir / "g.csv", "image_id,x,y,timestamp\na,1,2,0.5\nb,3.7,4.2,\na,5,6,0.7\n");
  const auto g = load_gaze((dir / "g.csv").string());
  ASSERT_EQ(g.size(), 2u);
  ASSERT_EQ(g.at("a").size(), 2u);
  EXPECT_EQ(g.at("a")[1].x, 5);
  EXPECT_EQ(*g.at("a")[0].timestamp, 0.5);
  EXPECT_EQ(g.at("b")[0].x, 3);
  EXPECT_EQ(g.at("b")[0].y, 4);
  EXPECT_FALSE(g.at("b")[0].timestamp.has_value());
  write_text(dir / "bad.csv", "image_id,x\na,1\n");
  EXPECT_THROW((void)load_gaze((dir / "bad.csv").string()), DataError);
}

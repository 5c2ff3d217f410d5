#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "radt/augment.hpp"

using namespace radt;
using radt::testing::random_tensor;

TEST(Augment, ProfileTable) {
  const AugmentProfile tg = profiles::teacher_global, tf = profiles::teacher_focal;
  const AugmentProfile sg = profiles::student_global, sf = profiles::student_focal;
  EXPECT_EQ(tg, (AugmentProfile{2.0, 2.2, 0.8, 0.8, 2.0, 2.5}));
  EXPECT_EQ(tf, (AugmentProfile{2.8, 3.0, 0.8, 0.8, 2.0, 2.5}));
  EXPECT_EQ(sg, (AugmentProfile{0.5, 1.0, 0.5, 0.5, 1.5, 2.0}));
  EXPECT_EQ(sf, (AugmentProfile{1.0, 1.5, 0.5, 0.5, 1.5, 2.0}));
  for (const auto& p : {tg, tf, sg, sf}) EXPECT_NO_THROW(p.validate());
  EXPECT_THROW((AugmentProfile{1.2, 1.0}).validate(), Error);
  EXPECT_THROW((AugmentProfile{1.0, 1.0, -0.1}).validate(), Error);
}

TEST(Augment, DegenerateProfileIsIdentity) {
  CounterRng rng(1);
  for (std::size_t c : {1u, 3u}) {
    auto img = random_tensor({6, 5, c}, rng, 0.0, 1.0);
    EXPECT_EQ(augment(img, profiles::identity, CounterRng(9)), img);
  }
}

TEST(Augment, DrawsStayInsideProfileBounds) {
  CounterRng rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto d = draw_augment(profiles::teacher_global, rng);
    EXPECT_GE(d.contrast, 2.0);
    EXPECT_LE(d.contrast, 2.2);
    EXPECT_LE(std::abs(d.brightness), 0.8);
    EXPECT_LE(std::abs(d.hue), 0.8);
    EXPECT_GE(d.saturation, 2.0);
    EXPECT_LE(d.saturation, 2.5);
  }
}

TEST(Augment, ContrastAboutMeanThenBrightnessThenClip) {
  Tensor<double> img({1, 4, 1}, {0.2, 0.4, 0.6, 0.8});
  auto out = apply_augment(img, AugmentDraw{2.0, 0.1, 0.3, 3.0});  // hue/saturation ignored for C=1
  const double expected[] = {0.0, 0.4, 0.8, 1.0};                  // (x-0.5)*2+0.5+0.1, clipped
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(Augment, SameSeedIsBitIdenticalAndOutputInRange) {
  CounterRng rng(3);
  auto img = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
  auto a = augment(img, profiles::teacher_focal, CounterRng(42));
  auto b = augment(img, profiles::teacher_focal, CounterRng(42));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, augment(img, profiles::teacher_focal, CounterRng(43)));
  for (auto x : a.values()) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Augment, HueRotationOnColorImage) {
  Tensor<double> red({1, 1, 3}, {1.0, 0.0, 0.0});
  auto green = apply_augment(red, AugmentDraw{1.0, 0.0, 1.0 / 3.0, 1.0});
  EXPECT_NEAR(green[0], 0.0, 1e-12);
  EXPECT_NEAR(green[1], 1.0, 1e-12);
  EXPECT_NEAR(green[2], 0.0, 1e-12);
  Tensor<double> pale({1, 1, 3}, {0.8, 0.4, 0.4});
  auto grey = apply_augment(pale, AugmentDraw{1.0, 0.0, 0.0, 0.0});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(grey[k], 0.8, 1e-12);
}

TEST(Augment, BatchUsesPerImageStreams) {
  CounterRng rng(4);
  auto one = random_tensor({4, 4, 1}, rng, 0.0, 1.0);
  Tensor<double> batch({2, 4, 4, 1});
  std::copy(one.data(), one.data() + 16, batch.data());
  std::copy(one.data(), one.data() + 16, batch.data() + 16);
  const CounterRng key(7);
  auto out = augment_batch(batch, profiles::student_focal, key);
  auto first = augment(one, profiles::student_focal, key.split(0));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(out[i], first[i]);
  bool differs = false;
  for (std::size_t i = 0; i < 16; ++i) differs |= out[i] != out[16 + i];
  EXPECT_TRUE(differs);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "radt/student_teacher.hpp"

using namespace radt;

namespace {

StudentTeacherConfig tiny_config() {
  StudentTeacherConfig c;
  c.student = c.teacher = GlobalFocalConfig::standard(8, 4, 4, 1);
  c.n_classes = 2;
  c.teacher_classes = 2;
  return c;
}

Tensor<float> random_images(std::size_t B, std::uint64_t seed, std::size_t side = 16) {
  CounterRng rng(seed);
  Tensor<float> t({B, side, side, 1});
  for (auto& x : t.values()) x = static_cast<float>(rng.uniform());
  return t;
}

template <class Module>
std::vector<Tensor<float>> snapshot(Module& m, const std::string& prefix) {
  std::vector<Tensor<float>> out;
  m.visit(prefix, [&](const std::string&, Tensor<float>& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST(Heads, ProbabilitiesAndRegionRange) {
  StudentTeacher<float> sys(tiny_config(), 1);
  auto p = predict(sys, random_images(3, 2));
  ASSERT_EQ(p.probs.shape(), (Shape{3, 2}));
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_NEAR(p.probs.at(b, 0) + p.probs.at(b, 1), 1.0, 1e-6);
    for (double v : {p.regions[b].cx, p.regions[b].cy, p.regions[b].h, p.regions[b].w}) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(InterTwl, Examples) {
  CounterRng rng(3);
  Tape<double> tape;
  auto s = radt::testing::random_tensor({2, 4, 3}, rng), t = radt::testing::random_tensor({2, 4, 3}, rng);
  TokenGrid<double> zs{tape.constant(s), 2, 2}, zt{tape.constant(t), 2, 2};
  SemaState<double> sema;
  EXPECT_EQ(inter_twl(zs, zt, {1.0, 0.0}, sema, false).tokens.value(), s);
  EXPECT_EQ(inter_twl(zs, zs, {0.5, 0.5}, sema, false).tokens.value(), s);
  auto out = inter_twl(zs, zt, {0.3, 0.7}, sema, false).tokens.value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LT(std::abs(out[i] - (0.3 * s[i] + 0.7 * t[i])), 1e-6);
  EXPECT_FALSE(sema.initialized);
  (void)inter_twl(zs, zt, {0.3, 0.7}, sema, true);
  EXPECT_TRUE(sema.initialized);
}

TEST(Presets, AllSevenConstructAndTrain) {
  const auto base = tiny_config();
  auto images = random_images(2, 4);
  const std::vector<std::size_t> labels{0, 1};
  for (const auto& name : preset_names()) {
    SCOPED_TRACE(name);
    auto cfg = apply_preset(base, name);
    StudentTeacher<float> sys(cfg, 5);
    const CounterRng aug(6);
    auto l = student_train_step(sys, images, labels, 1e-3, &aug);
    EXPECT_TRUE(std::isfinite(l.total));
    EXPECT_EQ(sys.has_teacher(), name.find("hvat") != std::string::npos || name == "full");
  }
  auto g = apply_preset(base, "global-only");
  EXPECT_EQ(g.student.lambda_in, (TwlWeights{1.0, 0.0}));
  EXPECT_EQ(g.student.lambda_out, (TwlWeights{1.0, 0.0}));
  auto f = apply_preset(base, "focal-hvat");
  EXPECT_EQ(f.student.lambda_in, (TwlWeights{0.0, 1.0}));
  EXPECT_EQ(f.val_giou, 0.0);
  EXPECT_EQ(f.val_mse, 0.0);
  auto full = apply_preset(base, "full");
  EXPECT_EQ(full.student.lambda_in, (TwlWeights{0.5, 0.5}));
  EXPECT_EQ(full.val_giou, 1.0);
  EXPECT_THROW((void)apply_preset(base, "focal"), Error);
}

TEST(StudentTrain, ZeroValWeightsGivePlainClassification) {
  auto cfg = apply_preset(tiny_config(), "focal-hvat");
  StudentTeacher<float> sys(cfg, 7);
  auto l = student_train_step(sys, random_images(2, 8), {1, 0}, 1e-3, nullptr);
  EXPECT_EQ(l.total, l.ce);
  EXPECT_GT(l.giou, 0.0);  // still measured, just not trained on
}

TEST(StudentTrain, FrozenTeacherIsBitIdentical) {
  StudentTeacher<float> sys(tiny_config(), 9);
  const auto t0 = snapshot(sys.teacher(), "teacher");
  const auto s0 = snapshot(sys.student(), "student");
  const auto t_sema = sys.teacher().net.sema_in();
  auto images = random_images(4, 10);
  for (std::uint64_t step = 0; step < 3; ++step) {
    const CounterRng aug(step);
    (void)student_train_step(sys, images, {0, 1, 1, 0}, 1e-3, &aug);
  }
  EXPECT_EQ(snapshot(sys.teacher(), "teacher"), t0);
  EXPECT_NE(snapshot(sys.student(), "student"), s0);
  EXPECT_FALSE(sys.teacher().net.sema_in().initialized);
  EXPECT_FALSE(t_sema.initialized);
  EXPECT_TRUE(sys.inter_sema_in().initialized);
}

TEST(StudentTrain, UnfrozenTeacherIsFineTuned) {
  auto cfg = tiny_config();
  cfg.teacher_frozen = false;
  StudentTeacher<float> sys(cfg, 11);
  const auto t0 = snapshot(sys.teacher(), "teacher");
  (void)student_train_step(sys, random_images(2, 12), {0, 1}, 1e-3, nullptr);
  EXPECT_NE(snapshot(sys.teacher(), "teacher"), t0);
  EXPECT_EQ(sys.teacher_adam().step, 1u);
}

TEST(Predict, PureAndRepeatable) {
  StudentTeacher<float> sys(tiny_config(), 13);
  auto images = random_images(4, 14);
  (void)student_train_step(sys, images, {0, 1, 0, 1}, 1e-3, nullptr);
  const auto in_buf = sys.inter_sema_in().smoothed;
  const auto s_buf = sys.student().net.sema_out().smoothed;
  auto a = predict(sys, images);
  auto b = predict(sys, images);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.regions, b.regions);
  EXPECT_EQ(sys.inter_sema_in().smoothed, in_buf);
  EXPECT_EQ(sys.student().net.sema_out().smoothed, s_buf);
}

TEST(Hvat, PerfectPredictionsGiveZeroLoss) {
  Tape<double> tape;
  auto logits = tape.leaf(Tensor<double>({2, 3}, {60, 0, 0, 0, 0, 60}));
  EXPECT_LT(cross_entropy(logits, {0, 2}).value()[0], 1e-20);
  std::vector<AttentionRegion> r{{0.4, 0.5, 0.2, 0.3}, {0.6, 0.6, 0.4, 0.1}};
  auto pred = tape.leaf(regions_to_tensor<double>(r));
  EXPECT_NEAR(giou_loss(pred, regions_to_tensor<double>(r)).value()[0], 0.0, 1e-12);
  EXPECT_EQ(keypoint_mse(pred, tape.constant(regions_to_tensor<double>(r))).value()[0], 0.0);
}

TEST(Hvat, MissingRegionsAreRejected) {
  auto cfg = tiny_config();
  Model<float> teacher(cfg.teacher, 2, CounterRng(15));
  AdamState adam;
  EXPECT_THROW((void)hvat_train_step(teacher, adam, cfg, random_images(2, 16), {0, 1}, {{0.5, 0.5, 0.2, 0.2}}, 1e-3,
                                     nullptr),
               Error);
}

TEST(Hvat, GradientReachesEveryTeacherParameter) {
  auto cfg = tiny_config();
  Model<float> teacher(cfg.teacher, 2, CounterRng(17));
  Tape<float> tape;
  Binder<float> bind(tape, true);
  auto images = random_images(3, 18);
  auto out = teacher_forward(bind, teacher, Views<float>{images, images}, true);
  auto target = regions_to_tensor<float>({{0.3, 0.3, 0.2, 0.2}, {0.7, 0.4, 0.3, 0.2}, {0.5, 0.5, 0.5, 0.5}});
  auto loss = add(cross_entropy(out.logits, {0, 1, 1}),
                  add(giou_loss(out.region, target), keypoint_mse(out.region, tape.constant(target))));
  auto grads = tape.backward(loss);
  std::size_t n = 0;
  teacher.visit("teacher", [&](const std::string& name, Tensor<float>& t) {
    double norm = 0;
    for (auto g : bind.grad(grads, t).values()) norm += double(g) * g;
    EXPECT_GT(norm, 0.0) << name;
    ++n;
  });
  EXPECT_EQ(n, 2u + 6 * 12 + 4);
}

TEST(Hvat, LossDecreasesOnFixedBatch) {
  auto cfg = tiny_config();
  Model<float> teacher(cfg.teacher, 2, CounterRng(19));
  AdamState adam;
  auto images = random_images(4, 20);
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  const std::vector<AttentionRegion> regions{
      {0.3, 0.3, 0.2, 0.2}, {0.7, 0.4, 0.3, 0.2}, {0.5, 0.5, 0.5, 0.5}, {0.2, 0.8, 0.2, 0.3}};
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step)
    losses.push_back(hvat_train_step(teacher, adam, cfg, images, labels, regions, 1e-3, nullptr).total);
  auto window_mean = [&](std::size_t from) {
    return std::accumulate(losses.begin() + from, losses.begin() + from + 10, 0.0) / 10.0;
  };
  for (std::size_t w = 10; w < 50; w += 10) EXPECT_LT(window_mean(w), window_mean(w - 10)) << "window " << w;
  EXPECT_LT(losses.back(), losses.front());
}

#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "gradcheck.hpp"
#include "radt/global_focal.hpp"

using namespace radt;
using radt::testing::grad_check;
using radt::testing::random_tensor;
using radt::testing::weighted_sum;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
GlobalFocalNet<T> small_net(std::uint64_t seed, std::size_t dim = 8, std::size_t window = 4) {
  return GlobalFocalNet<T>(GlobalFocalConfig::standard(dim, window, 2, 1), CounterRng(seed));
}

void scramble(GlobalFocalNet<double>& net, CounterRng& rng, double amp) {
  net.visit("net", [&](const std::string&, Tensor<double>& t) {
    for (auto& x : t.values()) x = rng.uniform(-amp, amp);
  });
}

}  // namespace

TEST(GlobalFocalConfig, StandardScheduleAndValidation) {
  auto c = GlobalFocalConfig::standard(32, 4);
  const std::size_t fh[] = {2, 4, 4, 8}, fm[] = {64, 128, 128, 256}, gh[] = {4, 8}, gm[] = {128, 256};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(c.focal[i].shift, i);
    EXPECT_EQ(c.focal[i].att_heads, fh[i]);
    EXPECT_EQ(c.focal[i].mlp_hidden, fm[i]);
  }
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(c.global[j].shift, j);
    EXPECT_EQ(c.global[j].att_heads, gh[j]);
    EXPECT_EQ(c.global[j].mlp_hidden, gm[j]);
  }
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.focal[2].shift = 1;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.lambda_out.focal = std::nan("");
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(GlobalFocalConfig::standard(12, 4).validate(), Error);  // 8 heads do not divide 12
  EXPECT_THROW(GlobalFocalConfig::standard(32, 3).validate(), Error);  // shift 3 needs window > 3
}

TEST(Twl, ExamplesAndLinearity) {
  CounterRng rng(4);
  Tape<double> tape;
  auto gv = random_tensor({2, 4, 3}, rng), fv = random_tensor({2, 4, 3}, rng);
  TokenGrid<double> g{tape.constant(gv), 2, 2}, f{tape.constant(fv), 2, 2};

  EXPECT_EQ(twl_combine(g, f, 1.0, 0.0).tokens.value(), gv);
  EXPECT_EQ(max_abs_diff(twl_combine(g, g, 0.5, 0.5).tokens.value(), gv), 0.0);

  auto out = twl_combine(g, f, 0.3, 0.7).tokens.value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LT(std::abs(out[i] - (0.3 * gv[i] + 0.7 * fv[i])), 1e-6);

  const double a = -2.5;
  TokenGrid<double> ag{scale(g.tokens, a), 2, 2}, af{scale(f.tokens, a), 2, 2};
  auto lhs = twl_combine(ag, af, 0.3, 0.7).tokens.value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(lhs[i], a * out[i], 1e-12);

  TokenGrid<double> other{tape.constant(random_tensor({2, 2, 3}, rng)), 1, 2};
  EXPECT_THROW((void)twl_combine(g, other, 0.5, 0.5), ShapeError);
}

TEST(Sema, DecayValues) {
  EXPECT_EQ(sema_decay(64), 0.984375);
  EXPECT_EQ(sema_decay(1), 0.0);
  EXPECT_EQ(sema_decay(2), 0.5);
  EXPECT_THROW((void)sema_decay(0), Error);
}

TEST(Sema, ConstantStreamIsAFixedPoint) {
  CounterRng rng(8);
  auto row = random_tensor({1, 3, 2}, rng);
  Tensor<double> batch({4, 3, 2});
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t k = 0; k < 6; ++k) batch[b * 6 + k] = row[k];
  SemaState<double> st;
  for (int t = 0; t < 20; ++t) {
    Tape<double> tape;
    auto out = sema_update(st, TokenGrid<double>{tape.constant(batch), 3, 1});
    EXPECT_LT(max_abs_diff(out.tokens.value(), batch), 1e-12);
  }
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(st.smoothed[k], row[k], 1e-12);
}

TEST(Sema, GeometricConvergenceForRandomDecay) {
  CounterRng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const double d = rng.uniform(0.01, 0.99);
    auto v = random_tensor({3, 2}, rng);
    SemaState<double> st{random_tensor({3, 2}, rng), true};
    const auto s0 = st.smoothed;
    for (int t = 1; t <= 50; ++t) {
      Tape<double> tape;
      (void)sema_update_decay(st, TokenGrid<double>{tape.constant(v.reshaped({1, 3, 2})), 3, 1}, d);
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double expected = std::pow(d, t) * std::abs(s0[k] - v[k]);
        EXPECT_NEAR(std::abs(st.smoothed[k] - v[k]), expected, 1e-5);
      }
    }
  }
}

TEST(Sema, SingleSampleBatchTakesCurrentMean) {
  CounterRng rng(3);
  SemaState<double> st{random_tensor({2, 2}, rng), true};
  auto z = random_tensor({1, 2, 2}, rng);
  Tape<double> tape;
  auto out = sema_update(st, TokenGrid<double>{tape.constant(z), 2, 1}, 1);
  EXPECT_LT(max_abs_diff(out.tokens.value(), z), 1e-12);
  EXPECT_LT(max_abs_diff(st.smoothed, z.reshaped({2, 2})), 1e-12);
}

TEST(Sema, ReplacesBatchMeanAndRejectsShapeDrift) {
  CounterRng rng(21);
  auto s_prev = random_tensor({2, 3}, rng);
  SemaState<double> st{s_prev, true};
  auto z = random_tensor({4, 2, 3}, rng);
  Tape<double> tape;
  auto out = sema_update(st, TokenGrid<double>{tape.constant(z), 2, 1}).tokens.value();
  const double d = 0.75;
  for (std::size_t k = 0; k < 6; ++k) {
    double mean = 0;
    for (std::size_t b = 0; b < 4; ++b) mean += z[b * 6 + k] / 4.0;
    const double s = d * s_prev[k] + (1 - d) * mean;
    EXPECT_NEAR(st.smoothed[k], s, 1e-12);
    for (std::size_t b = 0; b < 4; ++b) EXPECT_NEAR(out[b * 6 + k], z[b * 6 + k] - mean + s, 1e-12);
  }
  EXPECT_THROW((void)sema_update(st, TokenGrid<double>{tape.constant(random_tensor({4, 3, 3}, rng)), 3, 1}),
               ShapeError);
}

TEST(Sema, HistoryCarriesNoGradient) {
  // d/dz of sum(w * out) with out = z - v + d*s_prev + (1-d)*v only flows
  // through z and the current mean, never into the stored history.
  CounterRng rng(30);
  auto z0 = random_tensor({3, 2, 2}, rng);
  auto hist = random_tensor({2, 2}, rng);
  auto r = grad_check(
      [&](Tape<double>&, const std::vector<Var<double>>& in) {
        SemaState<double> st{hist, true};
        return weighted_sum(sema_update(st, TokenGrid<double>{in[0], 2, 1}).tokens);
      },
      {z0});
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(GlobalFocalNet, IdentityBlocksPassInputThrough) {
  auto net = small_net<double>(5);
  net.visit("net", [](const std::string& name, Tensor<double>& t) {
    if (name.ends_with("attn.proj.weight") || name.ends_with("mlp.fc2.weight")) t.fill(0.0);
  });
  CounterRng rng(6);
  auto x = random_tensor({2, 16, 8}, rng);
  Tape<double> tape;
  Binder<double> bind(tape, false);
  TokenGrid<double> g{tape.constant(x), 4, 4};
  auto f = net.focal_forward(bind, g);
  auto gl = net.global_forward(bind, g);
  for (const auto* out : {&f.f1, &f.f3, &gl.g0, &gl.g1}) {
    EXPECT_EQ(out->tokens.shape(), x.shape());
    EXPECT_LT(max_abs_diff(out->tokens.value(), x), 1e-12);
  }
}

TEST(GlobalFocalNet, ShiftScheduleChangesOutputs) {
  CounterRng rng(10);
  auto net4 = small_net<double>(9, 8, 4);
  scramble(net4, rng, 0.3);
  auto x = random_tensor({1, 64, 8}, rng);
  auto run = [&](GlobalFocalNet<double>& n) {
    Tape<double> tape;
    Binder<double> bind(tape, false);
    return n.focal_forward(bind, TokenGrid<double>{tape.constant(x), 8, 8}).f3.tokens.value();
  };
  const auto shifted = run(net4);
  for (auto& b : net4.mutable_config().focal) b.shift = 0;
  const auto unshifted = run(net4);
  EXPECT_GT(max_abs_diff(shifted, unshifted), 1e-6);
}

TEST(GlobalFocalNet, FocalWeightsZeroReduceToGlobalPathway) {
  auto cfg = GlobalFocalConfig::standard(8, 4, 2, 1);
  cfg.lambda_in = {1.0, 0.0};
  cfg.lambda_out = {1.0, 0.0};
  GlobalFocalNet<double> net(cfg, CounterRng(12));
  CounterRng rng(13);
  scramble(net, rng, 0.3);
  auto x = random_tensor({2, 16, 8}, rng);
  auto count = [&](auto&& pass) {
    Tape<double> tape;
    Binder<double> bind(tape, false);
    auto [a, b] = pass(bind, TokenGrid<double>{tape.constant(x), 4, 4});
    return std::tuple{a.tokens.value(), b.tokens.value(), tape.size()};
  };
  auto [z_in, z_out, fused_nodes] = count([&](Binder<double>& b, const TokenGrid<double>& g) {
    auto o = net.evaluate(b, g);
    return std::pair{o.z_in, o.z_out};
  });
  auto [g0, g1, global_nodes] = count([&](Binder<double>& b, const TokenGrid<double>& g) {
    auto o = net.global_forward(b, g);
    return std::pair{o.g0, o.g1};
  });
  EXPECT_EQ(z_in, g0);
  EXPECT_EQ(z_out, g1);
  // focal blocks are never evaluated: only the two weight scalings are extra
  EXPECT_EQ(fused_nodes, global_nodes + 2);
}

TEST(GlobalFocalNet, EvalIsPureAndTrainAdvancesSema) {
  auto net = small_net<double>(14);
  CounterRng rng(15);
  auto x = random_tensor({2, 16, 8}, rng);
  auto run = [&](bool train) {
    Tape<double> tape;
    Binder<double> bind(tape, false);
    return net.forward(bind, TokenGrid<double>{tape.constant(x), 4, 4}, train).z_out.tokens.value();
  };
  const auto a = run(false);
  const auto b = run(false);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(net.sema_in().initialized);
  EXPECT_FALSE(net.sema_out().initialized);
  (void)run(true);
  EXPECT_TRUE(net.sema_in().initialized);
  EXPECT_EQ(net.sema_out().smoothed.shape(), (Shape{16, 8}));
  const auto frozen = net.sema_out().smoothed;
  EXPECT_EQ(run(false), a);
  EXPECT_EQ(net.sema_out().smoothed, frozen);
}

TEST(GlobalFocalNet, GradientMatchesFiniteDifferences) {
  auto net = small_net<double>(16);
  CounterRng rng(17);
  scramble(net, rng, 0.25);
  auto x = random_tensor({2, 16, 8}, rng);
  for (bool train : {false, true}) {
    SemaState<double> s_in{random_tensor({16, 8}, rng), true}, s_out{random_tensor({16, 8}, rng), true};
    auto r = grad_check(
        [&](Tape<double>& tape, const std::vector<Var<double>>& in) {
          net.sema_in() = s_in;
          net.sema_out() = s_out;
          Binder<double> bind(tape, false);
          return weighted_sum(net.forward(bind, TokenGrid<double>{in[0], 4, 4}, train).z_out.tokens);
        },
        {x});
    EXPECT_LT(r.max_rel_err, 1e-3) << "train=" << train;
  }
}

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "deeprnn/oracles.hpp"
#include "deeprnn/theory.hpp"

using namespace deeprnn;

namespace {

double copier_max_error(const CopierNetwork& net, const Mat& x) {
  const HiddenTrace tr = forward_sequence(net.params, x);
  const Vec ref = copy_reference(x.col(0), net.spec.p);
  double worst = 0.0;
  for (Index t = 1; t <= x.rows(); ++t) worst = std::max(worst, std::abs(net.readout.dot(tr.output(t)) - ref(t - 1)));
  return worst;
}

ModelConfig linear_rnn(int L, int n, int d) { return ModelConfig{Family::kRnn, L, n, d, 0, Activation{}}; }

}  // namespace

TEST(Copier, SpecFormulas) {
  const CopierSpec s = copier_spec(3, 4);
  EXPECT_EQ(s.depth, 2);
  EXPECT_EQ(s.readout_index, 1);
  const CopierSpec t = copier_spec(4, 7);  // ceil(7/3) = 3, 1 + 9 - 7 = 3
  EXPECT_EQ(t.depth, 3);
  EXPECT_EQ(t.readout_index, 3);
  EXPECT_THROW(copier_spec(1, 2), std::invalid_argument);
  EXPECT_THROW(copier_spec(3, 0), std::invalid_argument);
}

TEST(Copier, WeightPattern) {
  const CopierNetwork net = build_copier(3, 4);
  for (const auto& layer : net.params.layers) {
    EXPECT_EQ(layer.U.col(0), Vec::Unit(3, 2));
    Mat shift = Mat::Zero(3, 3);
    shift(0, 1) = shift(1, 2) = 1.0;
    EXPECT_EQ(layer.V, shift);
    EXPECT_TRUE(layer.b.isZero(0.0));
    EXPECT_TRUE(layer.h0.isZero(0.0));
  }
  EXPECT_EQ(net.readout, Vec::Unit(3, 0));
}

TEST(Copier, SmallCases) {
  const Mat x = (Mat(4, 1) << 1, 2, 3, 4).finished();
  const CopierNetwork n2p2 = build_copier(2, 2);
  const HiddenTrace tr = forward_sequence(n2p2.params, x);
  const double expect[] = {0, 0, 1, 2};
  for (Index t = 1; t <= 4; ++t) EXPECT_EQ(n2p2.readout.dot(tr.output(t)), expect[t - 1]);

  const CopierNetwork n2p1 = build_copier(2, 1);
  EXPECT_EQ(n2p1.spec.depth, 1);
  EXPECT_EQ(copier_max_error(n2p1, x), 0.0);
}

TEST(Copier, ExactOverGrid) {
  Rng rng(1);
  for (int n = 2; n <= 5; ++n)
    for (int p = 1; p <= 3 * (n - 1); ++p) {
      const CopierNetwork net = build_copier(n, p);
      Mat ints(32, 1), gauss(32, 1);
      for (Index t = 0; t < 32; ++t) {
        ints(t, 0) = static_cast<double>(static_cast<int>(rng.below(2001)) - 1000);
        gauss(t, 0) = rng.normal();
      }
      EXPECT_EQ(copier_max_error(net, ints), 0.0) << n << "," << p;
      EXPECT_LT(copier_max_error(net, gauss), 1e-12) << n << "," << p;
    }
}

TEST(Copier, OneLagPastTheBoundNeedsAnotherLayer) {
  for (int n = 2; n <= 8; ++n)
    for (int L = 1; L <= 4; ++L) {
      const int p = memory_bound(n, L) + 1;
      EXPECT_EQ(copier_spec(n, p).depth, L + 1);
      EXPECT_EQ(copier_spec(n, memory_bound(n, L)).depth, L);
    }
}

TEST(MemoryBound, Values) {
  EXPECT_EQ(memory_bound(2, 1), 1);
  EXPECT_EQ(memory_bound(5, 3), 12);
  EXPECT_THROW(memory_bound(1, 2), std::invalid_argument);
}

TEST(Flatten, SingleLayerUnchanged) {
  Rng rng(2);
  const ModelParams p = random_params(linear_rnn(1, 3, 2), rng, {0.0, true});
  const ModelParams f = build_flattened(p);
  EXPECT_EQ(f.layers[0].U, p.layers[0].U);
  EXPECT_EQ(f.layers[0].V, p.layers[0].V);
  EXPECT_EQ(f.layers[0].b, p.layers[0].b);
  EXPECT_EQ(f.layers[0].h0, p.layers[0].h0);
}

TEST(Flatten, BlockFormulas) {
  Rng rng(3);
  const ModelParams p = random_params(linear_rnn(3, 2, 2), rng, {0.0, true});
  const ModelParams f = build_flattened(p);
  const auto& U = [&](int l) { return p.layers[static_cast<std::size_t>(l - 1)].U; };
  const auto& V = [&](int l) { return p.layers[static_cast<std::size_t>(l - 1)].V; };
  const auto& b = [&](int l) { return p.layers[static_cast<std::size_t>(l - 1)].b; };
  const Mat& Vt = f.layers[0].V;
  EXPECT_LT((Vt.block(4, 0, 2, 2) - U(3) * U(2) * V(1)).norm(), 1e-15);
  EXPECT_LT((Vt.block(4, 2, 2, 2) - U(3) * V(2)).norm(), 1e-15);
  EXPECT_LT((Vt.block(2, 0, 2, 2) - U(2) * V(1)).norm(), 1e-15);
  EXPECT_TRUE(Vt.block(0, 2, 2, 4).isZero(0.0));
  EXPECT_LT((f.layers[0].U.bottomRows(2) - U(3) * U(2) * U(1)).norm(), 1e-15);
  EXPECT_LT((f.layers[0].b.tail(2) - (U(3) * U(2) * b(1) + U(3) * b(2) + b(3))).norm(), 1e-15);
}

TEST(Flatten, RandomEquivalence) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(3));
    const ModelParams deep = random_params(linear_rnn(L, n, d), rng, {0.0, true});
    const Verdict v = check_concat_equiv(deep, build_flattened(deep), ConcatOptions{8, 2, 1e-12, rng.next_u64()});
    EXPECT_TRUE(v.passed) << v.residual;
  }
}

TEST(Flatten, FlattenedCopierStillCopies) {
  const CopierNetwork net = build_copier(2, 3);
  const ModelParams flat = build_flattened(net.params);
  EXPECT_EQ(flat.hidden(), 2 * net.spec.depth);
  Rng rng(5);
  Mat x(20, 1);
  for (Index t = 0; t < 20; ++t) x(t, 0) = static_cast<double>(rng.below(100));
  const HiddenTrace tr = forward_sequence(flat, x);
  const Vec ref = copy_reference(x.col(0), 3);
  const Index top = (net.spec.depth - 1) * 2 + net.spec.readout_index - 1;
  for (Index t = 1; t <= 20; ++t) EXPECT_EQ(tr.output(t)(top), ref(t - 1));
}

TEST(Flatten, RejectsNonlinearAndSecondOrder) {
  Rng rng(6);
  ModelConfig c = linear_rnn(2, 2, 1);
  c.activation.kind = ActivationKind::kTanh;
  EXPECT_THROW(build_flattened(random_params(c, rng)), std::invalid_argument);
  c = linear_rnn(2, 2, 1);
  c.family = Family::kSecondOrder;
  EXPECT_THROW(build_flattened(random_params(c, rng)), std::invalid_argument);
}

TEST(DiagPower, Examples) {
  const HiddenTrace a = forward_sequence(build_diag_power(2, 2, 2), (Mat(2, 2) << 2, 3, 1, 1).finished());
  EXPECT_EQ(a.output(2), (Vec(2) << 4, 9).finished());

  const Mat x = (Mat(2, 3) << 1, 1, 1, 0.3, -2, 7).finished();
  EXPECT_EQ(forward_sequence(build_diag_power(3, 3, 1), x).output(2), Vec(x.row(1).transpose()));

  Rng rng(7);
  const Mat y = random_normal<double>(2, 5, rng);
  const Vec out = forward_sequence(build_diag_power(3, 5, 2), y).output(2);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(out(k), y(0, k) * y(0, k) * y(1, k), 1e-15);
}

TEST(Parity, Examples) {
  const Mat x = (Mat(3, 1) << -1, 1, -1).finished();
  const HiddenTrace tr = forward_sequence(build_parity(1), x);
  EXPECT_EQ(tr.output(1)(0), -1);
  EXPECT_EQ(tr.output(2)(0), -1);
  EXPECT_EQ(tr.output(3)(0), 1);
  const HiddenTrace ones = forward_sequence(build_parity(4), Mat::Ones(6, 4));
  for (Index t = 1; t <= 6; ++t) EXPECT_EQ(ones.output(t), Vec::Ones(4));

  Rng rng(8);
  Mat s(20, 5);
  for (Index t = 0; t < 20; ++t)
    for (Index k = 0; k < 5; ++k) s(t, k) = rng.below(2) ? 1.0 : -1.0;
  const HiddenTrace p = forward_sequence(build_parity(5), s);
  Vec prod = Vec::Ones(5);
  for (Index t = 1; t <= 20; ++t) {
    prod = prod.cwiseProduct(s.row(t - 1).transpose());
    EXPECT_EQ(p.output(t), prod);
  }
}

TEST(CpIdentity, WitnessRank) {
  for (int R = 0; R <= 5; ++R) {
    const ModelParams w = build_cp_identity(4, 3, 2, R);
    EXPECT_EQ(jacobian_rank_h1(w, Vec::Ones(3)), std::min(R, 3));
  }
}

TEST(ParamCount, ReferenceValues) {
  EXPECT_EQ(param_count(4, 2), 60);
  EXPECT_EQ(param_count(7, 1), 63);
  EXPECT_EQ(param_count(5, 1), 35);
  EXPECT_EQ(param_count(3, 2), 36);
}

TEST(ParamCount, MatchesInstantiatedEntries) {
  for (int n = 1; n <= 8; ++n)
    for (int L = 1; L <= 4; ++L) {
      const ModelParams p = zero_params(linear_rnn(L, n, 1));
      EXPECT_EQ(param_count(n, L), count_entries(p));
      EXPECT_EQ(param_count(n, L, 1, false), count_entries(p));
      EXPECT_EQ(param_count(n, L, 1, true), count_entries(p, true));
      EXPECT_EQ(param_count(n, L, 3, false), count_entries(zero_params(linear_rnn(L, n, 3))));
    }
}

TEST(CriticalN, ReferenceValues) {
  EXPECT_NEAR(critical_n(2, 1), (3.0 + std::sqrt(13.0)) / 2.0, 1e-12);
  EXPECT_NEAR(critical_n(2, 1), 3.302775637731995, 1e-12);
  EXPECT_LT(critical_n(3, 2), critical_n(2, 1));
  // Largest roots of a n^2 + (-2a - Lt) n + (a - Lt(3Lt - 1)), from numpy.roots.
  EXPECT_NEAR(critical_n(3, 1), 2.5, 1e-12);
  EXPECT_NEAR(critical_n(3, 2), 2.4599349224704126, 1e-12);
  EXPECT_NEAR(critical_n(5, 4), 2.310529542956643, 1e-12);
  const CriticalMaximum m = critical_n_max(8);
  EXPECT_EQ(m.L, 2);
  EXPECT_EQ(m.Lt, 1);
  EXPECT_LT(m.value, 4.0);
  EXPECT_THROW(critical_n(2, 2), std::invalid_argument);
  EXPECT_THROW(critical_n(2, 0), std::invalid_argument);
}

TEST(CriticalN, IsRootOfParameterGapQuadratic) {
  for (int L = 2; L <= 8; ++L)
    for (int Lt = 1; Lt < L; ++Lt) {
      const double a = 2.0 * L * Lt - L - Lt;
      const double n = critical_n(L, Lt);
      EXPECT_NEAR(a * n * n + (-2 * a - Lt) * n + (a - Lt * (3.0 * Lt - 1)), 0.0, 1e-9 * a * n * n);
    }
}

TEST(Crossover, Rows) {
  const auto rows = crossover_table(12, 5, 2);
  bool saw_negative_n3 = false;
  for (const auto& r : rows) {
    if (r.n == 4 && r.L == 2 && r.Lt == 1) {
      EXPECT_EQ(r.n_tilde, 7);
      EXPECT_EQ(r.params_shallow, 63);
      EXPECT_EQ(r.params_deep, 60);
      EXPECT_EQ(r.delta, 3);
    }
    if (r.n == 3 && r.L == 2 && r.Lt == 1) {
      EXPECT_EQ(r.n_tilde, 5);
      EXPECT_EQ(r.delta, -1);
    }
    if (r.n == 3 && r.delta < 0) saw_negative_n3 = true;
    if (r.n >= 4) EXPECT_GT(r.delta, 0) << r.n << " " << r.L << " " << r.Lt;
  }
  EXPECT_TRUE(saw_negative_n3);
  EXPECT_TRUE(crossover_positive(rows, 4));
  EXPECT_FALSE(crossover_positive(rows, 3));
  EXPECT_THROW(crossover_table(3, 5), std::invalid_argument);
}

TEST(Crossover, Csv) {
  std::ostringstream os;
  write_crossover_csv(os, crossover_table(4, 2, 4));
  EXPECT_EQ(os.str(), "n,L,Lt,p,n_tilde,params_deep,params_shallow,delta\n4,2,1,6,7,60,63,3\n");
}

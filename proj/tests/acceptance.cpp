// SPDX-License-Identifier: Apache-2.0
//
// Acceptance criteria 1-10. `acceptance --criterion N` runs one, no argument
// runs all; each prints a single PASS/FAIL line and the exit status is nonzero
// on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deeprnn/experiments.hpp"
#include "deeprnn/serialize.hpp"
#include "deeprnn/theory.hpp"

using namespace deeprnn;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ModelConfig linear(Family f, int L, int n, int d, int R = 0) { return ModelConfig{f, L, n, d, R, Activation{}}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

constexpr double kCopierGaussianTol = 1e-24;

Outcome copier_exactness() {
  Rng rng(101);
  double worst_int = 0.0, worst_gauss = 0.0;
  int cases = 0;
  for (int n = 2; n <= 5; ++n)
    for (int p = 1; p <= 3 * (n - 1); ++p) {
      const CopierNetwork net = build_copier(n, p);
      for (int kind = 0; kind < 2; ++kind)
        for (int rep = 0; rep < 4; ++rep) {
          Mat x(32, 1);
          for (Index t = 0; t < 32; ++t)
            x(t, 0) = kind == 0 ? static_cast<double>(static_cast<std::int64_t>(rng.below(2001)) - 1000) : rng.normal();
          const HiddenTrace tr = forward_sequence(net.params, x);
          const Vec ref = copy_reference(x.col(0), p);
          double mse = 0.0;
          for (Index t = 1; t <= 32; ++t) mse += std::pow(net.readout.dot(tr.output(t)) - ref(t - 1), 2);
          mse /= 32.0;
          double& worst = kind == 0 ? worst_int : worst_gauss;
          worst = std::max(worst, mse);
        }
      ++cases;
    }
  return {worst_int == 0.0 && worst_gauss < kCopierGaussianTol,
          std::to_string(cases) + " (n,p) pairs, integer mse " + fmt("%.3g", worst_int) + ", gaussian mse " +
              fmt("%.3g", worst_gauss)};
}

// ---------------------------------------------------------------------------

constexpr double kFailFraction = 0.5;
constexpr double kSuccessMse = 1e-3;

RunConfig copy_run(int n, int L, int p, Index T = 16) {
  RunConfig c;
  c.task = default_task(TaskKind::kCopy);
  c.task.d = 1;
  c.task.T = T;
  c.task.p = p;
  c.task.train = 2000;
  c.model = linear(Family::kRnn, L, n, 1);
  c.train.lr = 1e-3;
  c.train.max_epochs = 2000;
  c.train.patience = 100;
  c.train.seeds = {0, 1, 2};
  return c;
}

Outcome memory_bound_training() {
  const RunRecord over = run(copy_run(2, 1, 2));
  const RunRecord at = run(copy_run(2, 1, 1));
  bool ok = true;
  double lowest_ratio = INFINITY;
  for (const auto& s : over.seeds) {
    const double ratio = s.test_at_best / over.target_variance;
    lowest_ratio = std::min(lowest_ratio, ratio);
    ok = ok && !s.failed && ratio > kFailFraction;
  }
  double worst_at = 0.0;
  for (const auto& s : at.seeds) {
    worst_at = std::max(worst_at, s.test_at_best);
    ok = ok && !s.failed && s.test_at_best < kSuccessMse;
  }
  return {ok, "p=2 lowest test/var " + fmt("%.4f", lowest_ratio) + " (> 0.5), p=1 worst test " + fmt("%.3g", worst_at) +
                  " (< 1e-3)"};
}

// ---------------------------------------------------------------------------

constexpr double kCriticalTol = 1e-12;

Outcome parameter_crossover() {
  const auto rows = crossover_table(12, 5, 4);
  bool positive = crossover_positive(rows, 4);
  for (const auto& r : rows) positive = positive && r.L <= 5 && r.Lt < r.L;
  std::optional<CrossoverRow> at;
  for (const auto& r : crossover_table(4, 2, 3))
    if (r.n == 3 && r.L == 2 && r.Lt == 1) at = r;
  const bool neg = at && at->params_deep == 36 && at->params_shallow == 35 && at->delta == -1;
  const double err = std::abs(critical_n(2, 1) - (3.0 + std::sqrt(13.0)) / 2.0);
  return {positive && neg && err < kCriticalTol,
          std::to_string(rows.size()) + " rows positive, delta(3,2,1)=" + (at ? std::to_string(at->delta) : "?") +
              ", |critical_n(2,1) - (3+sqrt13)/2| = " + fmt("%.2g", err)};
}

// ---------------------------------------------------------------------------

constexpr double kFlattenTol = 1e-12;

Outcome flattening() {
  const Rng root(404);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(3));
    const Index T = 1 + static_cast<Index>(rng.below(8));
    const ModelParams deep = random_params(linear(Family::kRnn, L, n, d), rng, InitOptions{0.0, true});
    worst = std::max(worst, check_concat_equiv(deep, build_flattened(deep),
                                               ConcatOptions{T, 3, kFlattenTol, rng.next_u64()}).residual);
  }
  return {worst < kFlattenTol, "100 models, worst rel err " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------

Outcome degree_growth() {
  bool diag = true;
  std::string degs;
  for (int L = 1; L <= 4; ++L) {
    DegreeOptions o;
    o.T = 2;
    o.input_dim = 3;
    o.which_input = 1;
    o.max_deg = 8;
    o.seed = static_cast<std::uint64_t>(L);
    const DegreeReport r = estimate_degree(output_at(build_diag_power(3, 3, L), 2), o);
    diag = diag && !r.exceeds_max && r.estimated_degree == L;
    degs += (degs.empty() ? "" : ",") + std::to_string(r.estimated_degree);
  }
  bool random_ok = true;
  int worst_excess = -100;
  const Rng root(505);
  for (int s = 0; s < 50; ++s) {
    Rng rng = root.split(static_cast<std::uint64_t>(s));
    const int L = 1 + static_cast<int>(rng.below(4)), n = 1 + static_cast<int>(rng.below(3));
    const int d = 1 + static_cast<int>(rng.below(3));
    const ModelParams p = random_params(linear(Family::kBilinear, L, n, d), rng, InitOptions{0.0, true});
    DegreeOptions o;
    o.T = 2;
    o.input_dim = d;
    o.which_input = 1;
    o.max_deg = 8;
    o.seed = rng.next_u64();
    const DegreeReport r = estimate_degree(output_at(p, 2), o);
    random_ok = random_ok && !r.exceeds_max && r.estimated_degree <= L;
    worst_excess = std::max(worst_excess, r.estimated_degree - L);
  }
  bool tl = true;
  int k = 0;
  for (int L = 1; L <= 2; ++L)
    for (Index T = 1; T <= 3; ++T) {
      Rng rng = Rng(606).split(static_cast<std::uint64_t>(k++));
      const ModelParams p = random_params(linear(Family::kBilinear, L, 3, 2), rng, InitOptions{0.0, true});
      tl = tl && check_degree_bound_TL(p, T, 1e-6, rng.next_u64()).passed;
    }
  return {diag && random_ok && tl, "diag power degrees " + degs + "; random max(deg - L) = " +
                                       std::to_string(worst_excess) + "; T^L bound " + (tl ? "holds" : "violated")};
}

// ---------------------------------------------------------------------------

constexpr double kAffineTol = 1e-10;

Outcome linearity() {
  const Rng root(707);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(3));
    const ModelParams p = random_params(linear(Family::kRnn, L, n, d), rng, InitOptions{0.0, true});
    worst = std::max(worst, check_affine(p, AffineOptions{4, 10, kAffineTol, rng.next_u64(), true}).residual);
  }
  int controls_failed = 0;
  const int controls = 10;
  for (int i = 0; i < controls; ++i) {
    Rng rng = Rng(708).split(static_cast<std::uint64_t>(i));
    ModelConfig c = linear(Family::kRnn, 1 + i % 3, 3, 2);
    c.activation.kind = i % 2 ? ActivationKind::kTanh : ActivationKind::kRelu;
    c.activation.placement = i % 4 < 2 ? Placement::kRecurrent : Placement::kDepthOnly;
    c.activation.activate_top = true;
    const ModelParams p = random_params(c, rng, InitOptions{1.0, true});
    controls_failed += check_affine(p, AffineOptions{4, 10, kAffineTol, rng.next_u64(), false}).passed ? 0 : 1;
  }
  return {worst < kAffineTol && controls_failed == controls,
          "100 linear models, worst residual " + fmt("%.3g", worst) + "; nonlinear controls rejected " +
              std::to_string(controls_failed) + "/" + std::to_string(controls)};
}

// ---------------------------------------------------------------------------

Outcome cp_rank() {
  const Rng root(808);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(5)), d = 1 + static_cast<int>(rng.below(5));
    const int R = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(3));
    const ModelParams p = random_params(linear(Family::kCpBilinear, L, n, d, R), rng, InitOptions{1.0, true});
    if (jacobian_rank_h1(p, random_normal_vector<double>(d, rng)) > R) ++violations;
  }
  int witnesses = 0, exact = 0;
  for (int n = 2; n <= 5; ++n)
    for (int R = 1; R <= std::min(n, 4); ++R)
      for (int L = 1; L <= 3; ++L) {
        ++witnesses;
        if (jacobian_rank_h1(build_cp_identity(n, n, L, R), Vec::Ones(n)) == R) ++exact;
      }
  return {violations == 0 && exact == witnesses, "rank > R on " + std::to_string(violations) +
                                                     "/100 random models; rank == R on " + std::to_string(exact) +
                                                     "/" + std::to_string(witnesses) + " witnesses"};
}

// ---------------------------------------------------------------------------

constexpr double kGradTol = 1e-5;

Outcome gradient_correctness() {
  double worst = 0.0;
  std::string where;
  int redraws = 0;
  for (Family f : {Family::kRnn, Family::kSecondOrder, Family::kBilinear, Family::kCp, Family::kCpBilinear})
    for (Placement pl : {Placement::kRecurrent, Placement::kDepthOnly}) {
      const GradSweep s = gradient_check_sweep(f, pl, 25, 0);
      redraws += s.redraws;
      if (s.worst_rel_error >= worst) {
        worst = s.worst_rel_error;
        where = std::string(to_string(f)) + "/" + std::string(to_string(pl)) + " " + s.worst;
      }
    }
  return {worst < kGradTol, "250 configs, worst rel err " + fmt("%.3g", worst) + " at " + where + ", " +
                                std::to_string(redraws) + " unresolvable draws replaced"};
}

// ---------------------------------------------------------------------------

constexpr double kParityReach = 1e-2;
constexpr double kParityFail = 0.5;
constexpr double kBudgetSlack = 1e-3;

Outcome depth_width_trends() {
  RunOptions quiet;
  quiet.keep_curves = false;
  const RunConfig proto = copy_run(2, 1, 8);
  const TaskSplits data = generate(proto.task);
  std::map<std::pair<int, int>, Aggregate> cells;
  const auto cell = [&](int n, int L) {
    const auto key = std::make_pair(n, L);
    if (!cells.count(key)) {
      RunConfig c = proto;
      c.model = linear(Family::kRnn, L, n, 1);
      c.train.target_loss = 1e-5;
      const auto t0 = Clock::now();
      cells[key] = run(c, data, quiet).test;
      std::printf("  copy p=8 n=%d L=%d: test %.3g +- %.2g (%.0f s)\n", n, L, cells[key].mean, cells[key].std,
                  seconds_since(t0));
      std::fflush(stdout);
    }
    return cells[key];
  };

  // (a) smallest width that solves copy p=8, searched upward per depth.
  std::map<int, int> minimal;
  for (int L : {1, 2, 4})
    for (int n = 2; n <= 10; ++n) {
      const Aggregate a = cell(n, L);
      if (a.count == 3 && a.mean < kSuccessMse) {
        minimal[L] = n;
        break;
      }
    }
  const auto width = [&](int L) { return minimal.count(L) ? minimal[L] : 1000; };
  const bool a_ok = minimal.count(4) && width(1) >= width(2) && width(2) >= width(4);

  // (b) fixed unit budget: shallow is no worse than deep.
  bool b_ok = true;
  std::string b_detail;
  for (int units : {12, 16}) {
    const double shallow = cell(units, 1).mean;
    for (int L : {2, 4}) {
      const double deep = cell(units / L, L).mean;
      b_ok = b_ok && shallow <= deep + kBudgetSlack;
    }
    b_detail += " nL=" + std::to_string(units) + ": L1 " + fmt("%.2g", shallow) + " L2 " +
                fmt("%.2g", cell(units / 2, 2).mean) + " L4 " + fmt("%.2g", cell(units / 4, 4).mean) + ";";
  }

  // (c) parity, recurrent vs depth-only tanh, L=1, n=16.
  RunConfig par;
  par.task = default_task(TaskKind::kParity);
  par.task.train = 2000;
  par.train.lr = 1e-3;
  par.train.max_epochs = 2000;
  par.train.patience = 100;
  par.train.target_loss = 1e-3;
  par.train.seeds = {0, 1, 2};
  const TaskSplits pdata = generate(par.task);
  par.model = ModelConfig{Family::kRnn, 1, 16, 5, 0, Activation{ActivationKind::kTanh, Placement::kRecurrent, false}};
  auto t0 = Clock::now();
  const RunRecord rec = run(par, pdata, quiet);
  std::printf("  parity recurrent: test %.3g +- %.2g (%.0f s)\n", rec.test.mean, rec.test.std, seconds_since(t0));
  par.model.activation.placement = Placement::kDepthOnly;
  t0 = Clock::now();
  const RunRecord dep = run(par, pdata, quiet);
  std::printf("  parity depth-only: test %.3g +- %.2g (%.0f s)\n", dep.test.mean, dep.test.std, seconds_since(t0));
  bool c_ok = rec.test.count == 3 && dep.test.count == 3;
  for (const auto& s : rec.seeds) c_ok = c_ok && s.test_at_best < kParityReach;
  for (const auto& s : dep.seeds) c_ok = c_ok && s.test_at_best > kParityFail;

  const auto w = [&](int L) { return minimal.count(L) ? std::to_string(minimal[L]) : std::string("none"); };
  return {a_ok && b_ok && c_ok, std::string("(a) ") + (a_ok ? "ok" : "no") + " minimal n L1/L2/L4 = " + w(1) + "/" +
                                    w(2) + "/" + w(4) + "; (b) " + (b_ok ? "ok" : "no") + b_detail + " (c) " +
                                    (c_ok ? "ok" : "no") + " recurrent " + fmt("%.3g", rec.test.mean) +
                                    ", depth-only " + fmt("%.3g", dep.test.mean)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  std::vector<RunConfig> configs;
  {
    RunConfig c = copy_run(3, 2, 2, 8);
    c.task.train = 64;
    c.task.val = c.task.test = 32;
    c.train.max_epochs = 30;
    c.train.patience = 30;
    c.train.batch = 16;
    configs.push_back(c);
    c.model = ModelConfig{Family::kCp, 2, 3, 1, 2, Activation{ActivationKind::kTanh, Placement::kDepthOnly, false}};
    c.train.clip = 1.0;
    c.train.masked = true;
    configs.push_back(c);
    c.task = default_task(TaskKind::kParity);
    c.task.T = 6;
    c.task.train = 64;
    c.task.val = c.task.test = 32;
    c.model = ModelConfig{Family::kSecondOrder, 1, 4, 5, 0, Activation{ActivationKind::kTanh, Placement::kRecurrent, false}};
    configs.push_back(c);
  }
  int identical = 0;
  for (const auto& c : configs) {
    const std::string a = to_json(run(c), true).dump(), b = to_json(run(c), true).dump();
    identical += a == b ? 1 : 0;
  }
  const int total = static_cast<int>(configs.size());
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " configurations reproduce their RunRecord (with curves) byte for byte"};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "construction exactness", 5, copier_exactness},
      {2, "memory-bound consistency", 600, memory_bound_training},
      {3, "parameter crossover", 1, parameter_crossover},
      {4, "flattening", 10, flattening},
      {5, "degree growth", 30, degree_growth},
      {6, "linearity", 10, linearity},
      {7, "cp rank", 30, cp_rank},
      {8, "gradient correctness", 60, gradient_correctness},
      {9, "depth/width trends", 7200, depth_width_trends},
      {10, "determinism", 600, determinism},
  };
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
  if (only < 0 || only > 10) {
    std::fprintf(stderr, "usage: acceptance [--criterion 1..10]\n");
    return 2;
  }
  bool all_ok = true;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_time = secs < c.limit_seconds;
    const bool ok = o.passed && in_time;
    all_ok = all_ok && ok;
    std::printf("criterion %d %s: %s  %s  [%.2f s, limit %.0f s%s]\n", c.id, c.name, ok ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}

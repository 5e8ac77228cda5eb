// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "deeprnn/serialize.hpp"
#include "deeprnn/theory.hpp"

namespace deeprnn {

using nlohmann::json;

void TrainSettings::validate() const {
  if (lr <= 0) throw std::invalid_argument("train: lr must be positive");
  if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("train: max_epochs must be >= 0");
  if (patience < 1 || patience > std::max(1, max_epochs)) {
    throw std::invalid_argument(detail::concat("train: patience ", patience, " must lie in [1, max_epochs]"));
  }
  if (seeds.empty()) throw std::invalid_argument("train: seed list is empty");
  if (max_restarts < 0) throw std::invalid_argument("train: max_restarts must be >= 0");
}

json to_json(const TrainSettings& s) {
  return {{"lr", s.lr},
          {"batch", s.batch},
          {"max_epochs", s.max_epochs},
          {"patience", s.patience},
          {"clip", s.clip},
          {"seeds", s.seeds},
          {"max_restarts", s.max_restarts},
          {"readout", s.readout},
          {"masked", s.masked},
          {"freeze_h0", s.freeze_h0},
          {"init_scale", s.init_scale},
          {"target_loss", s.target_loss}};
}

TrainSettings train_settings_from_json(const json& j) {
  TrainSettings s;
  s.lr = j.value("lr", s.lr);
  s.batch = j.value("batch", s.batch);
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.patience = j.value("patience", s.patience);
  s.clip = j.value("clip", s.clip);
  s.seeds = j.value("seeds", s.seeds);
  s.max_restarts = j.value("max_restarts", s.max_restarts);
  s.readout = j.value("readout", s.readout);
  s.masked = j.value("masked", s.masked);
  s.freeze_h0 = j.value("freeze_h0", s.freeze_h0);
  s.init_scale = j.value("init_scale", s.init_scale);
  s.target_loss = j.value("target_loss", s.target_loss);
  s.validate();
  return s;
}

json to_json(const RunConfig& c) {
  json j = {{"task", to_json(c.task)}, {"model", to_json(c.model)}, {"train", to_json(c.train)}};
  if (c.init) j["init"] = to_json(*c.init);
  if (c.init_head) j["init_head"] = {{"W", to_json(c.init_head->W)}, {"c", to_json(c.init_head->c)}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.task = task_from_json(j.at("task"));
  c.model = config_from_json(j.at("model"));
  c.train = train_settings_from_json(j.value("train", json::object()));
  if (j.contains("init")) c.init = model_from_json(j.at("init"));
  if (j.contains("init_head")) {
    c.init_head = Readout{matrix_from_json(j["init_head"].at("W")), vector_from_json(j["init_head"].at("c"))};
  }
  return c;
}

std::string config_hash(const RunConfig& c) { return hex64(json_hash(to_json(c))); }

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = static_cast<int>(values.size());
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(values.size()));
  return a;
}

namespace {

double evaluate(const ModelParams& p, const Readout* head, const SequenceBatch& data, const LossOptions& lo) {
  return loss_mse(forward(p, data), data, head, lo);
}

void shuffle(std::vector<Index>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

struct Attempt {
  bool diverged = false;
  std::string failure;
  SeedResult result;
  TrainedModel best;
};

Attempt train_once(const RunConfig& cfg, const TaskSplits& data, Rng rng) {
  const TrainSettings& ts = cfg.train;
  const LossOptions lo{ts.masked};
  const AdamHyper hyper{ts.lr, 0.9, 0.999, 1e-8, ts.clip};
  const Index d_out = data.train.output_dim();

  Attempt at;
  Rng init_rng = rng.split(0);
  Rng order_rng = rng.split(1);
  ModelParams params = cfg.init ? *cfg.init : random_params(cfg.model, init_rng, InitOptions{ts.init_scale, false});
  std::optional<Readout> head;
  if (ts.readout) head = cfg.init_head ? *cfg.init_head : random_readout(d_out, params.hidden(), init_rng);
  Readout* hp = head ? &*head : nullptr;
  at.result.param_count = count_entries(params) + (head ? head->W.size() + head->c.size() : 0);

  try {
    double best_val = evaluate(params, hp, data.val, lo);
    at.result.train_curve.push_back(evaluate(params, hp, data.train, lo));
    at.result.val_curve.push_back(best_val);
    if (!std::isfinite(best_val)) throw NumericalError("non-finite validation loss at epoch 0");
    at.best = {params, head};
    int best_epoch = 0;
    AdamState state;
    std::vector<Index> order(static_cast<std::size_t>(data.train.size()));
    std::iota(order.begin(), order.end(), Index{0});
    int epoch = 0;
    const bool reached = [&] { return ts.target_loss > 0 && best_val <= ts.target_loss; }();
    if (!reached) {
      for (epoch = 1; epoch <= ts.max_epochs; ++epoch) {
        shuffle(order, order_rng);
        double train_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(ts.batch)) {
          const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(ts.batch));
          const SequenceBatch mb = data.train.slice({order.begin() + static_cast<std::ptrdiff_t>(start),
                                                     order.begin() + static_cast<std::ptrdiff_t>(stop)});
          auto lg = backward(params, mb, hp, lo);
          if (!std::isfinite(lg.loss)) throw NumericalError(detail::concat("non-finite training loss at epoch ", epoch));
          train_sum += lg.loss * static_cast<double>(stop - start);
          if (ts.freeze_h0)
            for (auto& g : lg.grads.layers) g.h0.setZero();
          adam_step(params, hp, lg.grads, state, hyper);
        }
        const double val = evaluate(params, hp, data.val, lo);
        if (!std::isfinite(val)) throw NumericalError(detail::concat("non-finite validation loss at epoch ", epoch));
        at.result.train_curve.push_back(train_sum / static_cast<double>(order.size()));
        at.result.val_curve.push_back(val);
        if (val < best_val) {
          best_val = val;
          best_epoch = epoch;
          at.best = {params, head};
        }
        if (ts.target_loss > 0 && best_val <= ts.target_loss) break;
        if (epoch - best_epoch >= ts.patience) break;
      }
    }
    at.result.epochs_run = std::min(epoch, ts.max_epochs);
    at.result.best_epoch = best_epoch;
    at.result.best_val = best_val;
    at.result.test_at_best = evaluate(at.best.params, at.best.head ? &*at.best.head : nullptr, data.test, lo);
  } catch (const NumericalError& e) {
    at.diverged = true;
    at.failure = e.what();
  }
  return at;
}

}  // namespace

RunRecord run(const RunConfig& config, const RunOptions& options) {
  return run(config, generate(config.task), options);
}

RunRecord run(const RunConfig& config, const TaskSplits& data, const RunOptions& options,
              std::vector<TrainedModel>* models) {
  config.train.validate();
  if (config.init) {
    config.init->validate();
    if (config.init->config.input_dim != data.spec.d) throw std::invalid_argument("run: init model input dim differs");
  }
  if (config.model.input_dim != data.spec.d) {
    throw std::invalid_argument(detail::concat("run: model input dim ", config.model.input_dim, " but task has d=",
                                               data.spec.d));
  }
  if (!config.train.readout && config.model.hidden != data.spec.d) {
    throw std::invalid_argument("run: without a readout the hidden size must equal the target dimension");
  }

  RunRecord rec;
  rec.config = to_json(config);
  rec.config_hash = hex64(json_hash(rec.config));
  rec.target_variance = target_variance(data.test);
  std::vector<double> tests, vals;
  for (std::uint64_t seed : config.train.seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng root(seed);
    Attempt at;
    int restart = 0;
    for (;; ++restart) {
      at = train_once(config, data, root.split(static_cast<std::uint64_t>(restart)));
      if (!at.diverged || restart >= config.train.max_restarts) break;
    }
    at.result.seed = seed;
    at.result.restarts = restart;
    at.result.failed = at.diverged;
    at.result.failure = at.failure;
    if (options.timing) {
      at.result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (!options.keep_curves) {
      at.result.train_curve.clear();
      at.result.val_curve.clear();
    }
    if (!at.diverged) {
      tests.push_back(at.result.test_at_best);
      vals.push_back(at.result.best_val);
    }
    if (options.log) {
      options.log(detail::concat("seed ", seed, at.diverged ? " FAILED " : " test=", at.diverged ? at.failure : "",
                                 at.diverged ? 0.0 : at.result.test_at_best, " best_epoch=", at.result.best_epoch,
                                 " epochs=", at.result.epochs_run));
    }
    if (models) models->push_back(at.best);
    rec.seeds.push_back(std::move(at.result));
  }
  rec.test = aggregate(tests);
  rec.val = aggregate(vals);
  return rec;
}

json to_json(const RunRecord& r, bool with_curves) {
  json seeds = json::array();
  for (const auto& s : r.seeds) {
    json js = {{"seed", s.seed},
               {"failed", s.failed},
               {"restarts", s.restarts},
               {"best_val", s.best_val},
               {"test_at_best", s.test_at_best},
               {"best_epoch", s.best_epoch},
               {"epochs_run", s.epochs_run},
               {"param_count", s.param_count},
               {"wall_seconds", s.wall_seconds}};
    if (s.failed) js["failure"] = s.failure;
    if (with_curves) {
      js["train_curve"] = s.train_curve;
      js["val_curve"] = s.val_curve;
    }
    seeds.push_back(std::move(js));
  }
  const auto agg = [](const Aggregate& a) { return json{{"mean", a.mean}, {"std", a.std}, {"count", a.count}}; };
  return {{"config_hash", r.config_hash}, {"config", r.config},   {"target_variance", r.target_variance},
          {"seeds", std::move(seeds)},    {"test", agg(r.test)}, {"val", agg(r.val)}};
}

std::vector<SweepRow> sweep(const SweepGrid& grid, const RunOptions& options) {
  const TaskSplits data = generate(grid.task);
  std::vector<SweepRow> rows;
  for (Family f : grid.families)
    for (const Activation& act : grid.activations)
      for (int L : grid.depths)
        for (int n : grid.widths) {
          if (grid.keep && !grid.keep(n, L)) continue;
          RunConfig cfg;
          cfg.task = grid.task;
          cfg.train = grid.train;
          cfg.model = ModelConfig{f, L, n, static_cast<int>(grid.task.d), has_cp(f) ? grid.rank : 0, act};
          SweepRow row;
          row.task = std::string(to_string(grid.task.kind));
          row.family = f;
          row.activation = act;
          row.n = n;
          row.L = L;
          if (options.log) {
            options.log(detail::concat("cell ", to_string(f), " ", to_string(act.kind), "/", to_string(act.placement),
                                       " n=", n, " L=", L));
          }
          row.record = run(cfg, data, options);
          row.metric = row.record.test;
          for (const auto& s : row.record.seeds) row.failed_seeds += s.failed ? 1 : 0;
          row.params = row.record.seeds.empty() ? 0 : row.record.seeds.front().param_count;
          rows.push_back(std::move(row));
        }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "task,family,activation,placement,n,L,units,params,metric_mean,metric_std,failed_seeds\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.task << ',' << to_string(r.family) << ',' << to_string(r.activation.kind) << ','
       << to_string(r.activation.placement) << ',' << r.n << ',' << r.L << ',' << r.n * r.L << ',' << r.params << ','
       << r.metric.mean << ',' << r.metric.std << ',' << r.failed_seeds << '\n';
  }
}

void write_plot_data(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& x_axis) {
  if (x_axis != "n" && x_axis != "units" && x_axis != "params") {
    throw std::invalid_argument("plot data: x axis must be n, units or params");
  }
  os << "series,x,y,y_err\n";
  os.precision(17);
  for (const auto& r : rows) {
    const std::int64_t x = x_axis == "n" ? r.n : x_axis == "units" ? r.n * r.L : r.params;
    os << to_string(r.family) << '/' << to_string(r.activation.kind) << '/' << to_string(r.activation.placement)
       << "/L=" << r.L << ',' << x << ',' << r.metric.mean << ',' << r.metric.std << '\n';
  }
}

std::optional<int> minimal_width(const std::vector<SweepRow>& rows, int L, double threshold) {
  std::optional<int> best;
  for (const auto& r : rows) {
    if (r.L != L || r.metric.count == 0 || !(r.metric.mean < threshold)) continue;
    if (!best || r.n < *best) best = r.n;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Campaign

bool CampaignResult::all_passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
}

json CampaignResult::to_json() const {
  json list = json::array();
  for (const auto& v : verdicts) list.push_back(deeprnn::to_json(v));
  return {{"all_passed", all_passed()}, {"verdicts", std::move(list)}};
}

namespace {

ModelConfig linear(Family f, int L, int n, int d, int R = 0) {
  return ModelConfig{f, L, n, d, R, Activation{}};
}

// Digest over every model (or scan range) a verdict looked at.
struct Digest {
  json items = json::array();
  void add(const ModelParams& p) { items.push_back(params_hash(p)); }
  void add(const json& j) { items.push_back(hex64(json_hash(j))); }
  std::string str() const { return hex64(json_hash(items)); }
};

Verdict copier_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "copier_exact";
  v.tolerance = 1e-24;
  Rng rng(o.seed);
  double worst_int = 0.0, worst_gauss = 0.0;
  int cases = 0;
  Digest dg;
  for (int n = 2; n <= 5; ++n)
    for (int p = 1; p <= 3 * (n - 1); ++p) {
      CopierNetwork net = build_copier(n, p);
      if (o.inject_copier_bug) net.params.layers.front().V(0, 1) += 1e-3;
      dg.add(net.params);
      for (int kind = 0; kind < 2; ++kind) {
        Mat x(32, 1);
        for (Index t = 0; t < 32; ++t)
          x(t, 0) = kind == 0 ? static_cast<double>(static_cast<std::int64_t>(rng.below(201)) - 100) : rng.normal();
        const HiddenTrace tr = forward_sequence(net.params, x);
        const Vec ref = copy_reference(x.col(0), p);
        double mse = 0.0;
        for (Index t = 1; t <= 32; ++t) {
          const double e = net.readout.dot(tr.output(t)) - ref(t - 1);
          mse += e * e;
        }
        mse /= 32.0;
        (kind == 0 ? worst_int : worst_gauss) = std::max(kind == 0 ? worst_int : worst_gauss, mse);
      }
      ++cases;
    }
  v.residual = std::max(worst_int, worst_gauss);
  v.passed = worst_int == 0.0 && worst_gauss < v.tolerance;
  v.params_hash = dg.str();
  v.metrics = {{"cases", cases}, {"integer_mse", worst_int}, {"gaussian_mse", worst_gauss}};
  v.detail = "n in [2,5], p in [1, 3(n-1)], T=32: integer inputs exact, Gaussian below tolerance";
  return v;
}

Verdict memory_verdict() {
  Verdict v;
  v.claim = "memory_bound";
  bool ok = true;
  for (int n = 2; n <= 12; ++n)
    for (int p = 1; p <= 5 * (n - 1); ++p) {
      const CopierSpec s = copier_spec(n, p);
      ok = ok && p <= memory_bound(n, s.depth) && (s.depth == 1 || p > memory_bound(n, s.depth - 1)) &&
           s.readout_index >= 1 && s.readout_index <= n;
    }
  v.passed = ok;
  v.params_hash = hex64(json_hash({{"n", {2, 12}}, {"p_max", "5(n-1)"}}));
  v.detail = "copier depth is the least L with p <= L(n-1), n in [2,12]";
  return v;
}

Verdict flatten_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "flattening";
  v.tolerance = 1e-12;
  const Rng root(o.seed + 1);
  Digest dg;
  for (int i = 0; i < 20; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(3));
    const ModelParams deep = random_params(linear(Family::kRnn, L, n, d), rng, InitOptions{0.0, true});
    dg.add(deep);
    const Verdict c = check_concat_equiv(deep, build_flattened(deep), ConcatOptions{8, 2, 1e-12, rng.next_u64()});
    v.residual = std::max(v.residual, c.residual);
  }
  v.passed = v.residual < v.tolerance;
  v.params_hash = dg.str();
  v.detail = "20 random deep linear RNNs against their flattened form";
  return v;
}

Verdict affine_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "affine";
  v.tolerance = 1e-10;
  const Rng root(o.seed + 2);
  Digest dg;
  for (int i = 0; i < 20; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(3));
    const ModelParams p = random_params(linear(Family::kRnn, L, n, 2), rng, InitOptions{0.0, true});
    dg.add(p);
    v.residual = std::max(v.residual, check_affine(p, AffineOptions{4, 5, 1e-10, rng.next_u64(), true}).residual);
  }
  v.passed = v.residual < v.tolerance;
  v.params_hash = dg.str();
  v.detail = "20 random linear RNNs";
  return v;
}

Verdict diag_power_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "diag_power_degree";
  bool ok = true;
  json degrees = json::array();
  Digest dg;
  for (int L = 1; L <= 4; ++L) {
    DegreeOptions d;
    d.T = 2;
    d.input_dim = 3;
    d.which_input = 1;
    d.max_deg = 8;
    d.seed = o.seed + static_cast<std::uint64_t>(L);
    const ModelParams net = build_diag_power(3, 3, L);
    dg.add(net);
    const DegreeReport r = estimate_degree(output_at(net, 2), d);
    degrees.push_back(r.estimated_degree);
    ok = ok && !r.exceeds_max && r.estimated_degree == L;
    v.residual = std::max(v.residual, r.residual);
  }
  v.passed = ok;
  v.metrics = {{"degrees", degrees}};
  v.params_hash = dg.str();
  v.detail = "degree of h_2^(L) in x_1 equals L for L = 1..4";
  return v;
}

Verdict degree_bound_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "degree_bound_TL";
  bool ok = true;
  const Rng root(o.seed + 3);
  int k = 0;
  Digest dg;
  for (int L = 1; L <= 2; ++L)
    for (Index T = 1; T <= 3; ++T) {
      Rng rng = root.split(static_cast<std::uint64_t>(k++));
      const ModelParams p = random_params(linear(Family::kBilinear, L, 3, 2), rng, InitOptions{0.0, true});
      dg.add(p);
      ok = ok && check_degree_bound_TL(p, T, 1e-6, rng.next_u64()).passed;
    }
  v.passed = ok;
  v.params_hash = dg.str();
  v.detail = "random BIRNNs, T <= 3, L <= 2";
  return v;
}

Verdict parity_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "parity_network";
  TaskSpec spec = default_task(TaskKind::kParity);
  spec.train = spec.val = spec.test = 1;
  Rng rng(o.seed + 4);
  const ModelParams net = build_parity(static_cast<int>(spec.d));
  for (int i = 0; i < 20; ++i) {
    Mat x(spec.T, spec.d);
    for (Index t = 0; t < x.rows(); ++t)
      for (Index k = 0; k < x.cols(); ++k) x(t, k) = rng.below(2) ? 1.0 : -1.0;
    const Mat y = task_targets(spec, x);
    const HiddenTrace tr = forward_sequence(net, x);
    for (Index t = 1; t <= spec.T; ++t) {
      v.residual = std::max(v.residual, (tr.output(t) - y.row(t - 1).transpose()).cwiseAbs().maxCoeff());
    }
  }
  v.passed = v.residual == 0.0;
  v.params_hash = params_hash(net);
  v.detail = "single-layer diagonal BIRNN reproduces running parity exactly on 20 sign sequences";
  return v;
}

Verdict cp_rank_verdict(const CampaignOptions& o) {
  Verdict v;
  v.claim = "cp_rank";
  bool ok = true;
  const Rng root(o.seed + 5);
  Digest dg;
  for (int i = 0; i < 20; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int n = 1 + static_cast<int>(rng.below(5)), d = 1 + static_cast<int>(rng.below(5));
    const int R = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(3));
    ModelParams p = random_params(linear(Family::kCpBilinear, L, n, d, R), rng, InitOptions{1.0, true});
    dg.add(p);
    ok = ok && jacobian_rank_h1(p, random_normal_vector<double>(d, rng)) <= R;
  }
  for (int R = 1; R <= 4; ++R) {
    const ModelParams w = build_cp_identity(4, 4, 2, R);
    dg.add(w);
    ok = ok && jacobian_rank_h1(w, Vec::Ones(4)) == R;
  }
  v.passed = ok;
  v.params_hash = dg.str();
  v.detail = "rank <= R on 20 random CPBIRNNs; rank == R on identity-factor witnesses";
  return v;
}

Verdict crossover_verdict() {
  Verdict v;
  v.claim = "param_crossover";
  v.tolerance = 1e-12;
  const auto rows = crossover_table(12, 5, 4);
  const auto small = crossover_table(4, 2, 3);
  std::int64_t delta_321 = 0;
  for (const auto& r : small)
    if (r.n == 3 && r.L == 2 && r.Lt == 1) delta_321 = r.delta;
  const double cn = critical_n(2, 1);
  v.residual = std::abs(cn - (3.0 + std::sqrt(13.0)) / 2.0);
  v.passed = crossover_positive(rows, 4) && delta_321 == -1 && v.residual < v.tolerance;
  v.metrics = {{"rows", rows.size()}, {"delta_n3_L2_Lt1", delta_321}, {"critical_n_2_1", cn}};
  v.params_hash = hex64(json_hash({{"n", {4, 12}}, {"L_max", 5}}));
  v.detail = "delta > 0 for n in [4,12], L <= 5; delta = -1 at (3,2,1)";
  return v;
}

}  // namespace

CampaignResult verify_campaign(const CampaignOptions& options) {
  CampaignResult r;
  r.verdicts.push_back(copier_verdict(options));
  r.verdicts.push_back(memory_verdict());
  r.verdicts.push_back(flatten_verdict(options));
  r.verdicts.push_back(affine_verdict(options));
  r.verdicts.push_back(diag_power_verdict(options));
  r.verdicts.push_back(degree_bound_verdict(options));
  r.verdicts.push_back(parity_verdict(options));
  r.verdicts.push_back(cp_rank_verdict(options));
  r.verdicts.push_back(crossover_verdict());
  return r;
}

}  // namespace deeprnn

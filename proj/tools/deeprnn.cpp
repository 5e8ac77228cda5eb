// SPDX-License-Identifier: Apache-2.0
//
// deeprnn: datasets, explicit constructions, oracle campaign, training runs,
// sweeps and parameter counting from the command line.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deeprnn/experiments.hpp"
#include "deeprnn/serialize.hpp"
#include "deeprnn/theory.hpp"

using namespace deeprnn;
using nlohmann::json;

namespace {

// Writes to `path`, or stdout when it is empty or "-".
template <class Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

struct TaskFlags {
  std::optional<std::string> kind;
  std::optional<Index> d, T, p, train, val, test;
  std::optional<double> omega;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--task", kind, "copy | sinus | copy_sinus | parity");
    app->add_option("--d", d, "input dimension");
    app->add_option("--T", T, "sequence length");
    app->add_option("--p", p, "lag");
    app->add_option("--omega", omega, "sine frequency");
    app->add_option("--train-size", train);
    app->add_option("--val-size", val);
    app->add_option("--test-size", test);
    app->add_option("--data-seed", seed);
  }

  // Desk scale shrinks the training split to 2000 unless a config or flag says otherwise.
  TaskSpec apply(std::optional<TaskSpec> base, bool paper_scale) const {
    TaskSpec s = base ? *base : default_task(task_kind_from_string(kind.value_or("copy")));
    if (!base) s.train = paper_scale ? 10000 : 2000;
    if (kind && base) {
      const TaskSpec k = default_task(task_kind_from_string(*kind));
      s.kind = k.kind;
    }
    if (d) s.d = *d;
    if (T) s.T = *T;
    if (p) s.p = *p;
    if (omega) s.omega = *omega;
    if (train) s.train = *train;
    if (val) s.val = *val;
    if (test) s.test = *test;
    if (seed) s.seed = *seed;
    s.validate();
    return s;
  }
};

struct TrainFlags {
  std::optional<double> lr, clip, init_scale, target_loss;
  std::optional<Index> batch;
  std::optional<int> epochs, patience, restarts;
  std::vector<std::uint64_t> seeds;
  bool no_readout = false, masked = false, freeze_h0 = false;

  void add(CLI::App* app) {
    app->add_option("--lr", lr);
    app->add_option("--batch", batch);
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--patience", patience);
    app->add_option("--clip", clip, "global gradient-norm clip, 0 disables");
    app->add_option("--seeds", seeds, "comma separated")->delimiter(',');
    app->add_option("--restarts", restarts, "fresh restarts allowed after a divergence");
    app->add_option("--init-scale", init_scale);
    app->add_option("--target-loss", target_loss, "stop once validation loss reaches this");
    app->add_flag("--no-readout", no_readout, "train on the raw top hidden state");
    app->add_flag("--masked", masked, "leave the zero-target prefix out of the loss");
    app->add_flag("--freeze-h0", freeze_h0);
  }

  TrainSettings apply(TrainSettings s, bool paper_scale) const {
    if (paper_scale) s.patience = 400;
    if (lr) s.lr = *lr;
    if (batch) s.batch = *batch;
    if (epochs) s.max_epochs = *epochs;
    if (patience) s.patience = *patience;
    if (clip) s.clip = *clip;
    if (!seeds.empty()) s.seeds = seeds;
    if (restarts) s.max_restarts = *restarts;
    if (init_scale) s.init_scale = *init_scale;
    if (target_loss) s.target_loss = *target_loss;
    if (no_readout) s.readout = false;
    if (masked) s.masked = true;
    if (freeze_h0) s.freeze_h0 = true;
    s.validate();
    return s;
  }
};

struct ModelFlags {
  std::optional<std::string> family, activation, placement;
  std::optional<int> n, L, rank;
  bool activate_top = false;

  void add(CLI::App* app) {
    app->add_option("--family", family, "rnn | 2rnn | birnn | cprnn | cpbirnn");
    app->add_option("--n", n, "hidden width");
    app->add_option("--L", L, "depth");
    app->add_option("--rank", rank, "CP rank");
    app->add_option("--activation", activation, "identity | tanh | relu");
    app->add_option("--placement", placement, "recurrent | depth_only");
    app->add_flag("--activate-top", activate_top);
  }

  ModelConfig apply(ModelConfig c, Index d) const {
    c.input_dim = static_cast<int>(d);
    if (family) c.family = family_from_string(*family);
    if (n) c.hidden = *n;
    if (L) c.depth = *L;
    if (rank) c.rank = *rank;
    if (activation) c.activation.kind = activation_from_string(*activation);
    if (placement) c.activation.placement = placement_from_string(*placement);
    if (activate_top) c.activation.activate_top = true;
    return c;
  }
};

std::vector<int> parse_range(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const std::string item = s.substr(start, comma - start);
    const std::size_t dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(std::stoi(item));
    } else {
      const int lo = std::stoi(item.substr(0, dots)), hi = std::stoi(item.substr(dots + 2));
      if (hi < lo) throw std::invalid_argument("empty range " + item);
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    }
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep and second-order recurrent networks: constructions, oracles and training"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a seeded dataset as CSV");
  TaskFlags gen_task;
  std::string gen_out;
  bool gen_paper = false;
  gen_task.add(gen);
  gen->add_flag("--paper-scale", gen_paper, "10000 training sequences");
  gen->add_option("-o,--out", gen_out, "output file (default stdout)");

  // construct
  auto* con = app.add_subcommand("construct", "emit explicitly constructed weights as a model file");
  std::string con_kind, con_out, con_from;
  int con_n = 3, con_p = 2, con_d = 1, con_L = 1, con_R = 1;
  con->add_option("kind", con_kind, "copier | flattened | diag-power | parity | cp-identity")->required();
  con->add_option("--n", con_n, "width");
  con->add_option("--p", con_p, "copier lag");
  con->add_option("--d", con_d, "input dimension");
  con->add_option("--L", con_L, "depth");
  con->add_option("--rank", con_R, "CP rank");
  con->add_option("--from", con_from, "deep linear RNN model file to flatten");
  con->add_option("-o,--out", con_out, "output file (default stdout)");

  // verify
  auto* ver = app.add_subcommand("verify", "run every construction against its oracle; exit 1 on any red verdict");
  CampaignOptions ver_opt;
  std::string ver_out;
  ver->add_option("--seed", ver_opt.seed);
  ver->add_flag("--inject-copier-bug", ver_opt.inject_copier_bug, "perturb the copier before checking it");
  ver->add_option("-o,--out", ver_out, "verdict JSON (default stdout)");

  // train
  auto* tr = app.add_subcommand("train", "train one configuration over its seed list");
  std::string tr_config, tr_out;
  bool tr_paper = false, tr_timing = false, tr_curves = false, tr_quiet = false;
  TaskFlags tr_task;
  TrainFlags tr_train;
  ModelFlags tr_model;
  tr->add_option("-c,--config", tr_config, "JSON with task, model and train sections");
  tr_task.add(tr);
  tr_train.add(tr);
  tr_model.add(tr);
  tr->add_flag("--paper-scale", tr_paper, "10000 training sequences, patience 400");
  tr->add_flag("--timing", tr_timing, "record wall-clock seconds per seed");
  tr->add_flag("--curves", tr_curves, "include per-epoch loss curves");
  tr->add_flag("-q,--quiet", tr_quiet);
  tr->add_option("-o,--out", tr_out, "run record JSON (default stdout)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "train every (family, activation, depth, width) cell");
  TaskFlags sw_task;
  TrainFlags sw_train;
  std::string sw_families = "rnn", sw_acts = "identity:recurrent", sw_depths = "1,2,4", sw_widths = "2..8", sw_out,
              sw_plot;
  int sw_rank = 2;
  bool sw_paper = false, sw_quiet = false;
  sw_task.add(sw);
  sw_train.add(sw);
  sw->add_option("--families", sw_families, "comma separated");
  sw->add_option("--activations", sw_acts, "comma separated kind:placement pairs");
  sw->add_option("--depths", sw_depths, "list or range, e.g. 1,2,4 or 2..8");
  sw->add_option("--widths", sw_widths, "list or range");
  sw->add_option("--rank", sw_rank, "CP rank for cp families");
  sw->add_flag("--paper-scale", sw_paper);
  sw->add_flag("-q,--quiet", sw_quiet);
  sw->add_option("-o,--out", sw_out, "tidy CSV (default stdout)");
  sw->add_option("--plot-prefix", sw_plot, "also write <prefix>_{n,units,params}.csv");

  // count-params
  auto* cp = app.add_subcommand("count-params", "parameters of a linear RNN");
  std::int64_t cp_n = 2, cp_L = 1, cp_d = 1;
  bool cp_h0 = false;
  cp->add_option("--n", cp_n)->required();
  cp->add_option("--L", cp_L)->required();
  cp->add_option("--d", cp_d, "input dimension");
  cp->add_flag("--h0", cp_h0, "include initial states");

  // crossover
  auto* cr = app.add_subcommand("crossover", "deep copier vs narrowest shallower copier, parameter gap table");
  int cr_nmax = 12, cr_Lmax = 5, cr_nmin = 2;
  std::string cr_out;
  cr->add_option("--n-max", cr_nmax);
  cr->add_option("--L-max", cr_Lmax);
  cr->add_option("--n-min", cr_nmin);
  cr->add_option("-o,--out", cr_out, "CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const TaskSplits splits = generate(gen_task.apply(std::nullopt, gen_paper));
      emit(gen_out, [&](std::ostream& os) { write_dataset_csv(os, splits); });
    } else if (*con) {
      json j;
      if (con_kind == "copier") {
        const CopierNetwork net = build_copier(con_n, con_p);
        j = to_json(net.params);
        j["readout"] = to_json(net.readout);
        j["copier"] = {{"n", net.spec.n}, {"p", net.spec.p}, {"depth", net.spec.depth},
                       {"readout_index", net.spec.readout_index}};
      } else if (con_kind == "flattened") {
        if (con_from.empty()) throw std::invalid_argument("construct flattened: --from is required");
        j = to_json(build_flattened(load_model(con_from)));
      } else if (con_kind == "diag-power") {
        j = to_json(build_diag_power(con_n, con_d, con_L));
      } else if (con_kind == "parity") {
        j = to_json(build_parity(con_d));
      } else if (con_kind == "cp-identity") {
        j = to_json(build_cp_identity(con_n, con_d, con_L, con_R));
      } else {
        throw std::invalid_argument("construct: unknown kind " + con_kind);
      }
      emit(con_out, [&](std::ostream& os) { os << j.dump(1) << '\n'; });
    } else if (*ver) {
      const CampaignResult r = verify_campaign(ver_opt);
      emit(ver_out, [&](std::ostream& os) { os << r.to_json().dump(2) << '\n'; });
      for (const auto& v : r.verdicts)
        std::fprintf(stderr, "%-20s %s  residual=%.3g tol=%.3g\n", v.claim.c_str(), v.passed ? "pass" : "FAIL",
                     v.residual, v.tolerance);
      return r.all_passed() ? 0 : 1;
    } else if (*tr) {
      RunConfig cfg;
      std::optional<TaskSpec> base;
      if (!tr_config.empty()) {
        cfg = run_config_from_json(read_json(tr_config));
        base = cfg.task;
      } else {
        cfg.model = ModelConfig{Family::kRnn, 1, 8, 1, 0, Activation{}};
      }
      cfg.task = tr_task.apply(base, tr_paper);
      cfg.train = tr_train.apply(cfg.train, tr_paper);
      cfg.model = tr_model.apply(cfg.model, cfg.task.d);
      RunOptions opt;
      opt.timing = tr_timing;
      opt.keep_curves = tr_curves;
      if (!tr_quiet) opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
      const RunRecord rec = run(cfg, opt);
      emit(tr_out, [&](std::ostream& os) { os << to_json(rec, tr_curves).dump(2) << '\n'; });
    } else if (*sw) {
      SweepGrid g;
      g.task = sw_task.apply(std::nullopt, sw_paper);
      g.train = sw_train.apply(TrainSettings{}, sw_paper);
      g.families.clear();
      std::stringstream fs(sw_families);
      for (std::string f; std::getline(fs, f, ',');) g.families.push_back(family_from_string(f));
      g.activations.clear();
      std::stringstream as(sw_acts);
      for (std::string a; std::getline(as, a, ',');) {
        const auto colon = a.find(':');
        Activation act;
        act.kind = activation_from_string(a.substr(0, colon));
        if (colon != std::string::npos) act.placement = placement_from_string(a.substr(colon + 1));
        g.activations.push_back(act);
      }
      g.depths = parse_range(sw_depths);
      g.widths = parse_range(sw_widths);
      g.rank = sw_rank;
      RunOptions opt;
      opt.keep_curves = false;
      if (!sw_quiet) opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
      const auto rows = sweep(g, opt);
      emit(sw_out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
      if (!sw_plot.empty())
        for (const char* axis : {"n", "units", "params"})
          emit(sw_plot + "_" + axis + ".csv", [&](std::ostream& os) { write_plot_data(os, rows, axis); });
    } else if (*cp) {
      if (cp_n < 1 || cp_L < 1 || cp_d < 1) throw std::invalid_argument("count-params: n, L, d must be positive");
      std::cout << param_count(cp_n, cp_L, cp_d, cp_h0) << '\n';
    } else if (*cr) {
      const auto rows = crossover_table(cr_nmax, cr_Lmax, cr_nmin);
      emit(cr_out, [&](std::ostream& os) { write_crossover_csv(os, rows); });
      const CriticalMaximum m = critical_n_max(cr_Lmax);
      std::fprintf(stderr, "positive for n >= 4: %s; max critical n %.12g at L=%d, Lt=%d\n",
                   crossover_positive(rows) ? "yes" : "no", m.value, m.L, m.Lt);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "deeprnn: %s\n", e.what());
    return 2;
  }
  return 0;
}

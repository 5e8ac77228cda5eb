// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/theory.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace deeprnn {

namespace {

ModelConfig linear_config(Family family, int depth, int hidden, int input_dim) {
  ModelConfig c;
  c.family = family;
  c.depth = depth;
  c.hidden = hidden;
  c.input_dim = input_dim;
  c.activation = Activation{ActivationKind::kIdentity, Placement::kRecurrent, false};
  return c;
}

}  // namespace

CopierSpec copier_spec(int n, int p) {
  if (n <= 1) throw std::invalid_argument(detail::concat("copier: width must exceed 1, got ", n));
  if (p < 1) throw std::invalid_argument(detail::concat("copier: lag must be >= 1, got ", p));
  CopierSpec s;
  s.n = n;
  s.p = p;
  s.depth = (p + n - 2) / (n - 1);
  s.readout_index = 1 + s.depth * (n - 1) - p;
  return s;
}

CopierNetwork build_copier(int n, int p) {
  CopierNetwork net;
  net.spec = copier_spec(n, p);
  net.params = zero_params(linear_config(Family::kRnn, net.spec.depth, n, 1));
  for (int l = 0; l < net.spec.depth; ++l) {
    auto& layer = net.params.layers[static_cast<std::size_t>(l)];
    layer.U(n - 1, 0) = 1.0;
    for (int i = 0; i + 1 < n; ++i) layer.V(i, i + 1) = 1.0;
  }
  net.readout = Vec::Zero(n);
  net.readout(net.spec.readout_index - 1) = 1.0;
  return net;
}

Vec copy_reference(const Vec& x, int p) {
  Vec y = Vec::Zero(x.size());
  for (Index t = p; t < x.size(); ++t) y(t) = x(t - p);
  return y;
}

int memory_bound(int n, int L) {
  if (n < 2 || L < 1) throw std::invalid_argument(detail::concat("memory_bound: need n > 1 and L >= 1"));
  return L * (n - 1);
}

ModelParams build_flattened(const ModelParams& deep) {
  deep.validate();
  if (deep.config.family != Family::kRnn) {
    throw std::invalid_argument("build_flattened: source must be a first-order RNN");
  }
  if (!deep.config.activation.is_linear()) {
    throw std::invalid_argument("build_flattened: source must be linear");
  }
  const int L = deep.depth();
  const Index n = deep.hidden();
  const Index d = deep.config.input_dim;
  ModelParams flat = zero_params(linear_config(Family::kRnn, 1, static_cast<int>(n * L), static_cast<int>(d)));
  auto& out = flat.layers.front();

  // through[j] = U^(l) ... U^(j+1) for the current l; identity when j == l.
  for (int l = 1; l <= L; ++l) {
    const auto& layer_l = deep.layers[static_cast<std::size_t>(l - 1)];
    const Index row = (l - 1) * n;
    Mat through = Mat::Identity(n, n);
    Vec bias = Vec::Zero(n);
    for (int j = l; j >= 1; --j) {
      const auto& layer_j = deep.layers[static_cast<std::size_t>(j - 1)];
      out.V.block(row, (j - 1) * n, n, n) = through * layer_j.V;
      bias += through * layer_j.b;
      if (j > 1) through = through * layer_j.U;
    }
    out.U.block(row, 0, n, d) = through * deep.layers.front().U;
    out.b.segment(row, n) = bias;
    out.h0.segment(row, n) = layer_l.h0;
  }
  return flat;
}

ModelParams build_diag_power(int n, int d, int L) {
  if (n < 1 || d < 1 || L < 1) throw std::invalid_argument("build_diag_power: n, d, L must be positive");
  ModelParams p = zero_params(linear_config(Family::kBilinear, L, n, d));
  for (int l = 0; l < L; ++l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    const Index d_in = p.layer_input_dim(l);
    layer.A = Tensor3d::Delta(n, d_in, n, std::min<Index>(n, d_in));
    layer.h0 = Vec::Ones(n);
  }
  return p;
}

ModelParams build_parity(int d) { return build_diag_power(d, d, 1); }

ModelParams build_cp_identity(int n, int d, int L, int R) {
  if (n < 1 || d < 1 || L < 1 || R < 0) throw std::invalid_argument("build_cp_identity: bad dimensions");
  ModelConfig c = linear_config(Family::kCpBilinear, L, n, d);
  c.rank = R;
  ModelParams p = zero_params(c);
  for (int l = 0; l < L; ++l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    const Index k = std::min<Index>({static_cast<Index>(R), n, p.layer_input_dim(l)});
    for (Index r = 0; r < k; ++r) {
      layer.cp->A(r, r) = 1.0;
      layer.cp->B(r, r) = 1.0;
      layer.cp->C(r, r) = 1.0;
    }
    layer.h0 = Vec::Ones(n);
  }
  return p;
}

std::int64_t param_count(std::int64_t n, std::int64_t L) { return (2 * L - 1) * n * n + (L + 1) * n; }

std::int64_t param_count(std::int64_t n, std::int64_t L, std::int64_t d, bool include_initial_states) {
  // Layer 1: U is n x d; layers 2..L: U is n x n; every layer has V (n x n) and b (n).
  std::int64_t total = n * d + (L - 1) * n * n + L * (n * n + n);
  if (include_initial_states) total += L * n;
  return total;
}

double critical_n(int L, int Lt) {
  if (Lt < 1 || Lt >= L) {
    throw std::invalid_argument(detail::concat("critical_n: need 1 <= Lt < L, got L=", L, ", Lt=", Lt));
  }
  const double a = 2.0 * L * Lt - L - Lt;
  return 1.0 + Lt * (1.0 + std::sqrt(12.0 * a + 1.0)) / (2.0 * a);
}

CriticalMaximum critical_n_max(int L_max) {
  CriticalMaximum best;
  for (int L = 2; L <= L_max; ++L)
    for (int Lt = 1; Lt < L; ++Lt) {
      const double v = critical_n(L, Lt);
      if (v > best.value) best = {v, L, Lt};
    }
  return best;
}

std::vector<CrossoverRow> crossover_table(int n_max, int L_max, int n_min) {
  if (n_max < 4) throw std::invalid_argument("crossover_table: n_max must be >= 4");
  if (n_min < 2) throw std::invalid_argument("crossover_table: n_min must be >= 2");
  std::vector<CrossoverRow> rows;
  for (int n = n_min; n <= n_max; ++n)
    for (int L = 2; L <= L_max; ++L)
      for (int Lt = 1; Lt < L; ++Lt) {
        CrossoverRow r;
        r.n = n;
        r.L = L;
        r.Lt = Lt;
        r.p = L * (n - 1);
        r.n_tilde = (r.p + Lt - 1) / Lt + 1;
        r.params_deep = param_count(n, L);
        r.params_shallow = param_count(r.n_tilde, Lt);
        r.delta = r.params_shallow - r.params_deep;
        rows.push_back(r);
      }
  return rows;
}

bool crossover_positive(const std::vector<CrossoverRow>& rows, int n_from) {
  return std::all_of(rows.begin(), rows.end(), [n_from](const CrossoverRow& r) { return r.n < n_from || r.delta > 0; });
}

void write_crossover_csv(std::ostream& os, const std::vector<CrossoverRow>& rows) {
  os << "n,L,Lt,p,n_tilde,params_deep,params_shallow,delta\n";
  for (const auto& r : rows) {
    os << r.n << ',' << r.L << ',' << r.Lt << ',' << r.p << ',' << r.n_tilde << ',' << r.params_deep << ','
       << r.params_shallow << ',' << r.delta << '\n';
  }
}

}  // namespace deeprnn

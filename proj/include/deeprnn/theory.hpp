// SPDX-License-Identifier: Apache-2.0
//
// Explicit weight constructions and counting formulas for linear recurrent
// networks: the delay-line copier, the deep-to-wide flattening, the diagonal
// power network, and parameter-count crossover between deep and shallow nets.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "deeprnn/models.hpp"

namespace deeprnn {

/// Depth and readout slot of the delay-line network that copies the first
/// input component p steps forward with width n.
struct CopierSpec {
  int n = 0;
  int p = 0;
  int depth = 0;          // ceil(p / (n - 1))
  int readout_index = 0;  // 1-based slot of the top layer holding x_{t-p}
};

CopierSpec copier_spec(int n, int p);

struct CopierNetwork {
  CopierSpec spec;
  ModelParams params;
  Vec readout;  // e_{readout_index}
};

/// Scalar-input linear RNN whose layer l holds (x_{t - l(n-1)}, ..., x_{t - (l-1)(n-1)}).
/// U^(1) = e_n, U^(l) copies slot 1 of the layer below into slot n, V^(l) shifts
/// every slot up by one; biases and initial states are zero.
CopierNetwork build_copier(int n, int p);

/// The lag-p copy target of a scalar sequence: x_{t-p} for t > p, 0 otherwise.
Vec copy_reference(const Vec& x, int p);

/// Largest lag a width-n, depth-L linear RNN can copy: L (n - 1).
int memory_bound(int n, int L);

/// Single-layer linear RNN of width nL whose state is the concatenation of
/// every layer state of `deep`. Block (l, j) of the recurrence is
/// (U^(l) ... U^(j+1)) V^(j) for j <= l and zero above the diagonal.
ModelParams build_flattened(const ModelParams& deep);

/// Linear bilinear-only network with Kronecker-delta tensors on the leading
/// min(n, d) indices and all-ones initial states, so that
/// h_2^(L) = diag(x_1)^L x_2 on those coordinates.
ModelParams build_diag_power(int n, int d, int L);

/// Single-layer diagonal network; h_t = x_1 * ... * x_t elementwise.
ModelParams build_parity(int d);

/// Linear CP bilinear-only network whose factors are the leading k = min(R, n, d)
/// identity columns (zero elsewhere) and whose initial states are all ones.
/// Every layer then maps its input through a rank-k coordinate projection, so
/// x_1 -> h_1^(L) has rank exactly k. With R = n = d this is the CP form of
/// build_diag_power.
ModelParams build_cp_identity(int n, int d, int L, int R);

/// (2L - 1) n^2 + (L + 1) n: parameters of a scalar-input linear RNN,
/// initial states excluded.
std::int64_t param_count(std::int64_t n, std::int64_t L);

/// General count for input dimension d, optionally including initial states.
std::int64_t param_count(std::int64_t n, std::int64_t L, std::int64_t d, bool include_initial_states);

/// Largest root of the deep-vs-shallow parameter gap,
/// 1 + Lt (1 + sqrt(12 a + 1)) / (2 a) with a = 2 L Lt - L - Lt. Requires 1 <= Lt < L.
double critical_n(int L, int Lt);

struct CriticalMaximum {
  double value = 0;
  int L = 0;
  int Lt = 0;
};

/// Maximum of critical_n over all 1 <= Lt < L <= L_max.
CriticalMaximum critical_n_max(int L_max);

struct CrossoverRow {
  int n = 0;
  int L = 0;
  int Lt = 0;
  int p = 0;        // L (n - 1)
  int n_tilde = 0;  // ceil(p / Lt) + 1, the narrowest depth-Lt net that can copy lag p
  std::int64_t params_deep = 0;
  std::int64_t params_shallow = 0;
  std::int64_t delta = 0;  // params_shallow - params_deep
};

/// Rows for n in [n_min, n_max], L in [2, L_max], Lt in [1, L).
std::vector<CrossoverRow> crossover_table(int n_max, int L_max, int n_min = 2);

/// True when every row with n >= n_from has delta > 0.
bool crossover_positive(const std::vector<CrossoverRow>& rows, int n_from = 4);

/// Columns: n,L,Lt,p,n_tilde,params_deep,params_shallow,delta
void write_crossover_csv(std::ostream& os, const std::vector<CrossoverRow>& rows);

}  // namespace deeprnn

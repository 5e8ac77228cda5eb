// SPDX-License-Identifier: Apache-2.0
//
// Backpropagation through time for every model family, the MSE loss with an
// optional linear readout, and an Adam optimizer over the flattened parameters.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deeprnn/models.hpp"

namespace deeprnn {

/// Linear head y_t = W h_t^(L) + c.
struct Readout {
  Mat W;  // d_out x n
  Vec c;  // d_out
};

Readout zero_readout(Index d_out, Index n);
Readout random_readout(Index d_out, Index n, Rng& rng);

/// Same layout as the parameters: layers[l].U holds dL/dU^(l+1), and so on.
/// Bilinear-only families get structurally zero dU, dV, db.
struct Gradients {
  std::vector<LayerParams> layers;
  std::optional<Readout> head;
};

Gradients zero_gradients(const ModelParams& params, const Readout* head = nullptr);

struct LossOptions {
  /// Average only over time steps whose mask entry is set.
  bool masked = false;
};

/// Mean over batch, counted time steps and output dims of the squared error
/// between (head applied to) h_t^(L) and the targets.
double loss_mse(const BatchTrace& trace, const SequenceBatch& batch, const Readout* head = nullptr,
                const LossOptions& options = {});
double loss_mse(const HiddenTrace& trace, const Mat& targets, const Readout* head = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Reverse-mode gradients of loss_mse. Throws NumericalError naming the time
/// step and layer if a non-finite value appears.
LossAndGradients backward(const ModelParams& params, const SequenceBatch& batch, const Readout* head = nullptr,
                          const LossOptions& options = {});

/// Same, reusing a trace already computed by forward(params, batch).
LossAndGradients backward(const ModelParams& params, const BatchTrace& trace, const SequenceBatch& batch,
                          const Readout* head = nullptr, const LossOptions& options = {});

// Flattened views. Order: per layer U, V, b, h0, then tensor or CP factors
// (A, B, C), all row-major; then the head W, c.

Vec flatten(const ModelParams& params, const Readout* head = nullptr);
Vec flatten(const Gradients& grads);
void unflatten(const Vec& theta, ModelParams& params, Readout* head = nullptr);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double clip = 0.0;
};

struct AdamState {
  Vec m;
  Vec v;
  std::int64_t step = 0;
};

/// One Adam update with bias correction. State vectors are sized on first use.
void adam_step(Vec& theta, Vec g, AdamState& state, const AdamHyper& hyper);
void adam_step(ModelParams& params, Readout* head, const Gradients& grads, AdamState& state, const AdamHyper& hyper);

struct GradCheck {
  /// ||g - g_fd||_inf / ||g_fd||_inf; zero when both vanish.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double fd_norm = 0.0;
  /// Roundoff level of a central difference: 16 eps |loss| / h.
  double noise_floor = 0.0;
  /// False when ||g_fd||_inf is within 1e3 of the noise floor, where a
  /// relative comparison carries no information.
  bool resolvable() const { return fd_norm >= 1e3 * noise_floor; }
  Index size = 0;
};

/// Central differences over every flattened entry, step h per entry.
GradCheck gradient_check(const ModelParams& params, const SequenceBatch& batch, const Readout* head = nullptr,
                         const LossOptions& options = {}, double h = 1e-6);

struct GradSweep {
  double worst_rel_error = 0.0;
  int configs = 0;
  int redraws = 0;  // unresolvable draws replaced by fresh ones
  std::string worst;
};

/// `configs` random tanh models of one family and placement with n <= 4, L <= 3,
/// T <= 4, R <= 3, batch 3, alternating readout and activate_top. Gives up after
/// `configs` redraws.
GradSweep gradient_check_sweep(Family family, Placement placement, int configs = 25, std::uint64_t seed = 0);

}  // namespace deeprnn

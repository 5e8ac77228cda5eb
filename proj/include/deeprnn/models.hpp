// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deeprnn/numkit.hpp"

namespace deeprnn {

/// Model families. The bilinear-only variants carry zero first-order terms.
enum class Family {
  kRnn,          // h = s(V h' + U u + b)
  kSecondOrder,  // adds the full bilinear term A x_1 h' x_2 u
  kBilinear,     // second order with U = V = b = 0
  kCp,           // bilinear term from rank-R CP factors
  kCpBilinear,   // CP with U = V = b = 0
};

enum class ActivationKind { kIdentity, kTanh, kRelu };

/// kRecurrent applies the activation to the updated state; kDepthOnly keeps the
/// time recurrence linear and activates only the signal sent to the next layer.
enum class Placement { kRecurrent, kDepthOnly };

std::string_view to_string(Family f);
std::string_view to_string(ActivationKind k);
std::string_view to_string(Placement p);
Family family_from_string(std::string_view s);
ActivationKind activation_from_string(std::string_view s);
Placement placement_from_string(std::string_view s);

constexpr bool has_full_tensor(Family f) { return f == Family::kSecondOrder || f == Family::kBilinear; }
constexpr bool has_cp(Family f) { return f == Family::kCp || f == Family::kCpBilinear; }
constexpr bool bilinear_only(Family f) { return f == Family::kBilinear || f == Family::kCpBilinear; }

struct Activation {
  ActivationKind kind = ActivationKind::kIdentity;
  Placement placement = Placement::kRecurrent;
  /// Depth-only placement leaves the top layer's output unactivated unless this is set.
  bool activate_top = false;

  bool is_linear() const { return kind == ActivationKind::kIdentity; }
  double apply(double v) const;
  /// Derivative expressed in terms of the pre-activation value.
  double derivative(double v) const;
};

struct ModelConfig {
  Family family = Family::kRnn;
  int depth = 1;
  int hidden = 1;
  int input_dim = 1;
  int rank = 0;  // CP families only
  Activation activation;
};

struct CpFactors {
  Mat A;  // n x R, contracts the previous state
  Mat B;  // d_in x R, contracts the layer input
  Mat C;  // n x R, output side
  Index rank() const { return A.cols(); }
};

struct LayerParams {
  Mat U;   // n x d_in
  Mat V;   // n x n
  Vec b;   // n
  Vec h0;  // n
  std::optional<Tensor3d> A;  // n x d_in x n
  std::optional<CpFactors> cp;
};

struct ModelParams {
  ModelConfig config;
  std::vector<LayerParams> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  Index hidden() const { return config.hidden; }
  Index layer_input_dim(int layer) const { return layer == 0 ? config.input_dim : config.hidden; }

  /// Throws std::invalid_argument on any shape or family inconsistency and
  /// NumericalError on non-finite entries.
  void validate() const;
};

struct InitOptions {
  /// Uniform half-width; <= 0 means 1/sqrt(hidden).
  double scale = 0.0;
  bool random_h0 = false;
};

ModelParams zero_params(const ModelConfig& config);
ModelParams random_params(const ModelConfig& config, Rng& rng, InitOptions options = {});

/// Number of scalar parameters. Bilinear-only families do not count their
/// structurally zero first-order terms.
std::int64_t count_entries(const ModelParams& params, bool include_initial_states = false);

/// A batch of equal-length sequences. inputs[b] is T x d, targets[b] is T x d_out.
/// mask[t] is 1 where the target at (0-based) time t is defined by the data
/// rather than by zero padding.
struct SequenceBatch {
  std::vector<Mat> inputs;
  std::vector<Mat> targets;
  std::vector<std::uint8_t> mask;

  Index size() const { return static_cast<Index>(inputs.size()); }
  Index length() const { return inputs.empty() ? 0 : inputs.front().rows(); }
  Index input_dim() const { return inputs.empty() ? 0 : inputs.front().cols(); }
  Index output_dim() const { return targets.empty() ? 0 : targets.front().cols(); }

  SequenceBatch slice(const std::vector<Index>& rows) const;
};

/// Complete record of a batched forward pass. Time and layer indices are
/// 1-based for hidden states; index 0 holds the initial state (time) or the
/// model input (layer). Every matrix is (width x batch).
///   state[t][l]  recurrence state h_t^(l); state[t][0] = x_t, state[0][l] = h_0^(l)
///   pre[t][l]    pre-activation sum for l >= 1, t >= 1
///   signal[t][l] what layer l hands upward; signal[t][L] is the model output
struct BatchTrace {
  Index T = 0;
  int L = 0;
  Index batch = 0;
  std::vector<std::vector<Mat>> state;
  std::vector<std::vector<Mat>> pre;
  std::vector<std::vector<Mat>> signal;

  const Mat& output(Index t) const { return signal[static_cast<std::size_t>(t)][static_cast<std::size_t>(L)]; }
};

/// Single-sequence view: h[t][l] is a vector, same indexing as BatchTrace.
struct HiddenTrace {
  std::vector<std::vector<Vec>> h;
  std::vector<std::vector<Vec>> pre;
  std::vector<std::vector<Vec>> signal;

  Index length() const { return static_cast<Index>(h.size()) - 1; }
  int depth() const { return h.empty() ? 0 : static_cast<int>(h.front().size()) - 1; }
  const Vec& output(Index t) const { return signal[static_cast<std::size_t>(t)].back(); }
};

HiddenTrace extract(const BatchTrace& trace, Index b);

/// Forward pass shared by all families; dispatches on the parameters present.
BatchTrace forward(const ModelParams& params, const SequenceBatch& batch);

/// First-order models only (no tensor, no CP factors).
BatchTrace forward_rnn(const ModelParams& params, const SequenceBatch& batch);
/// Every layer must carry a full tensor.
BatchTrace forward_2rnn(const ModelParams& params, const SequenceBatch& batch);
/// Every layer must carry CP factors; the full tensor is never materialized.
BatchTrace forward_cprnn(const ModelParams& params, const SequenceBatch& batch);

/// Convenience: forward a single sequence (T x d).
HiddenTrace forward_sequence(const ModelParams& params, const Mat& inputs);

/// Closed-form unrolling of a linear model at (t, l), both 1-based:
///   h_t^(l) = (prod_{i<=l} Ubar_{t-1}^(i)) x_t + sum_{j<=l} (prod_{j<k<=l} Ubar_{t-1}^(k)) bbar_{t-1}^(j)
/// with Ubar_{t-1}^(i) = (A^(i) x_1 h_{t-1}^(i))^T + U^(i) and bbar_{t-1}^(i) = V^(i) h_{t-1}^(i) + b^(i).
/// Previous-step states come from the step recurrence.
Vec unroll_closed_form(const ModelParams& params, const Mat& inputs, Index t, int l);

/// Matrix of the bilinear term at a given previous state: the map u -> A x_1 h x_2 u.
/// Zero for first-order layers.
Mat bilinear_map(const LayerParams& layer, const Vec& h_prev, Index input_dim);

// Batch kernels with a summation order that does not depend on the batch size,
// so a batch forward equals per-sequence forwards bit for bit.

/// Z += W X, accumulating over the inner index in ascending order.
void accumulate_product(Mat& Z, const Mat& W, const Mat& X);

}  // namespace deeprnn

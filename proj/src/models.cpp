// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deeprnn {

namespace {

constexpr std::pair<Family, std::string_view> kFamilyNames[] = {
    {Family::kRnn, "rnn"},       {Family::kSecondOrder, "2rnn"},  {Family::kBilinear, "birnn"},
    {Family::kCp, "cprnn"},      {Family::kCpBilinear, "cpbirnn"},
};

constexpr std::pair<ActivationKind, std::string_view> kActivationNames[] = {
    {ActivationKind::kIdentity, "identity"},
    {ActivationKind::kTanh, "tanh"},
    {ActivationKind::kRelu, "relu"},
};

constexpr std::pair<Placement, std::string_view> kPlacementNames[] = {
    {Placement::kRecurrent, "recurrent"},
    {Placement::kDepthOnly, "depth_only"},
};

template <typename E, std::size_t N>
std::string_view name_of(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "?";
}

template <typename E, std::size_t N>
E parse_name(const std::pair<E, std::string_view> (&table)[N], std::string_view s, const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw std::invalid_argument(detail::concat("unknown ", what, " '", s, "'"));
}

void require_shape(const Mat& m, Index rows, Index cols, int layer, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(detail::concat("layer ", layer + 1, ": ", name, " is ", m.rows(), "x", m.cols(),
                                               ", expected ", rows, "x", cols));
  }
}

void require_dim(const Vec& v, Index dim, int layer, const char* name) {
  if (v.size() != dim) {
    throw std::invalid_argument(
        detail::concat("layer ", layer + 1, ": ", name, " has dim ", v.size(), ", expected ", dim));
  }
}

void apply_activation(const Activation& act, const Mat& in, Mat& out) {
  switch (act.kind) {
    case ActivationKind::kIdentity:
      out = in;
      break;
    case ActivationKind::kTanh:
      out = in.unaryExpr([](double v) { return std::tanh(v); });
      break;
    case ActivationKind::kRelu:
      out = in.unaryExpr([](double v) { return v > 0.0 ? v : 0.0; });
      break;
  }
}

// Z(k, :) += sum_{i, j} A(i, j, k) H(i, :) * X(j, :), accumulated with (i, j) in lexicographic order.
void accumulate_bilinear(Mat& Z, const Tensor3d& A, const Mat& H, const Mat& X) {
  const Index n_prev = A.dim(0), d_in = A.dim(1), n_out = A.dim(2);
  Eigen::Matrix<double, 1, Eigen::Dynamic> w(H.cols());
  for (Index i = 0; i < n_prev; ++i) {
    for (Index j = 0; j < d_in; ++j) {
      w = H.row(i).cwiseProduct(X.row(j));
      for (Index k = 0; k < n_out; ++k) Z.row(k) += A(i, j, k) * w;
    }
  }
}

// Z += C ((A^T H) .* (B^T X)) without forming the full tensor.
void accumulate_cp(Mat& Z, const CpFactors& cp, const Mat& H, const Mat& X) {
  const Index R = cp.rank();
  if (R == 0) return;
  Mat a = Mat::Zero(R, H.cols());
  Mat bb = Mat::Zero(R, H.cols());
  accumulate_product(a, cp.A.transpose(), H);
  accumulate_product(bb, cp.B.transpose(), X);
  a.array() *= bb.array();
  accumulate_product(Z, cp.C, a);
}

void check_batch(const ModelParams& params, const SequenceBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  const Index T = batch.length();
  for (const auto& x : batch.inputs) {
    if (x.rows() != T) throw std::invalid_argument("forward: sequences of different length in one batch");
    if (x.cols() != params.config.input_dim) {
      throw std::invalid_argument(
          detail::concat("forward: input dim ", x.cols(), " but model expects ", params.config.input_dim));
    }
  }
}

}  // namespace

std::string_view to_string(Family f) { return name_of(kFamilyNames, f); }
std::string_view to_string(ActivationKind k) { return name_of(kActivationNames, k); }
std::string_view to_string(Placement p) { return name_of(kPlacementNames, p); }
Family family_from_string(std::string_view s) { return parse_name(kFamilyNames, s, "family"); }
ActivationKind activation_from_string(std::string_view s) { return parse_name(kActivationNames, s, "activation"); }
Placement placement_from_string(std::string_view s) { return parse_name(kPlacementNames, s, "placement"); }

double Activation::apply(double v) const {
  switch (kind) {
    case ActivationKind::kTanh:
      return std::tanh(v);
    case ActivationKind::kRelu:
      return v > 0.0 ? v : 0.0;
    default:
      return v;
  }
}

double Activation::derivative(double v) const {
  switch (kind) {
    case ActivationKind::kTanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case ActivationKind::kRelu:
      return v > 0.0 ? 1.0 : 0.0;
    default:
      return 1.0;
  }
}

void ModelParams::validate() const {
  const auto& c = config;
  if (c.depth < 1) throw std::invalid_argument("model depth must be >= 1");
  if (c.hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  if (c.input_dim < 1) throw std::invalid_argument("input dim must be >= 1");
  if (has_cp(c.family) && c.rank < 0) throw std::invalid_argument("CP rank must be >= 0");
  if (depth() != c.depth) {
    throw std::invalid_argument(detail::concat("model has ", depth(), " layers but config depth is ", c.depth));
  }
  const Index n = c.hidden;
  for (int l = 0; l < depth(); ++l) {
    const auto& layer = layers[static_cast<std::size_t>(l)];
    const Index d_in = layer_input_dim(l);
    require_shape(layer.U, n, d_in, l, "U");
    require_shape(layer.V, n, n, l, "V");
    require_dim(layer.b, n, l, "b");
    require_dim(layer.h0, n, l, "h0");
    if (layer.A && layer.cp) throw std::invalid_argument(detail::concat("layer ", l + 1, ": both tensor and CP factors"));
    if (has_full_tensor(c.family)) {
      if (!layer.A) throw std::invalid_argument(detail::concat("layer ", l + 1, ": second-order family needs a tensor"));
      const auto& dims = layer.A->dims();
      if (dims[0] != n || dims[1] != d_in || dims[2] != n) {
        throw std::invalid_argument(detail::concat("layer ", l + 1, ": tensor is ", dims[0], "x", dims[1], "x",
                                                   dims[2], ", expected ", n, "x", d_in, "x", n));
      }
    } else if (layer.A) {
      throw std::invalid_argument(detail::concat("layer ", l + 1, ": family ", to_string(c.family),
                                                 " does not take a full tensor"));
    }
    if (has_cp(c.family)) {
      if (!layer.cp) throw std::invalid_argument(detail::concat("layer ", l + 1, ": CP family needs factors"));
      require_shape(layer.cp->A, n, c.rank, l, "cp.A");
      require_shape(layer.cp->B, d_in, c.rank, l, "cp.B");
      require_shape(layer.cp->C, n, c.rank, l, "cp.C");
    } else if (layer.cp) {
      throw std::invalid_argument(detail::concat("layer ", l + 1, ": family ", to_string(c.family),
                                                 " does not take CP factors"));
    }
    if (bilinear_only(c.family)) {
      if (!layer.U.isZero(0.0) || !layer.V.isZero(0.0) || !layer.b.isZero(0.0)) {
        throw std::invalid_argument(
            detail::concat("layer ", l + 1, ": bilinear-only family requires U = V = b = 0"));
      }
    }
    bool finite = all_finite(layer.U) && all_finite(layer.V) && all_finite(layer.b) && all_finite(layer.h0);
    if (layer.A) finite = finite && all_finite(layer.A->data());
    if (layer.cp) finite = finite && all_finite(layer.cp->A) && all_finite(layer.cp->B) && all_finite(layer.cp->C);
    if (!finite) throw NumericalError(detail::concat("layer ", l + 1, ": non-finite parameter"));
  }
}

ModelParams zero_params(const ModelConfig& config) {
  ModelParams p;
  p.config = config;
  const Index n = config.hidden;
  for (int l = 0; l < config.depth; ++l) {
    const Index d_in = l == 0 ? config.input_dim : n;
    LayerParams layer;
    layer.U = Mat::Zero(n, d_in);
    layer.V = Mat::Zero(n, n);
    layer.b = Vec::Zero(n);
    layer.h0 = Vec::Zero(n);
    if (has_full_tensor(config.family)) layer.A = Tensor3d(n, d_in, n);
    if (has_cp(config.family)) {
      layer.cp = CpFactors{Mat::Zero(n, config.rank), Mat::Zero(d_in, config.rank), Mat::Zero(n, config.rank)};
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

ModelParams random_params(const ModelConfig& config, Rng& rng, InitOptions options) {
  ModelParams p = zero_params(config);
  const double s = options.scale > 0 ? options.scale : 1.0 / std::sqrt(static_cast<double>(config.hidden));
  const Index n = config.hidden;
  for (int l = 0; l < config.depth; ++l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    const Index d_in = p.layer_input_dim(l);
    if (!bilinear_only(config.family)) {
      layer.U = random_uniform<double>(n, d_in, rng, -s, s);
      layer.V = random_uniform<double>(n, n, rng, -s, s);
      layer.b = random_uniform_vector<double>(n, rng, -s, s);
    }
    if (layer.A) *layer.A = random_uniform_tensor<double>(n, d_in, n, rng, -s, s);
    if (layer.cp) {
      layer.cp->A = random_uniform<double>(n, config.rank, rng, -s, s);
      layer.cp->B = random_uniform<double>(d_in, config.rank, rng, -s, s);
      layer.cp->C = random_uniform<double>(n, config.rank, rng, -s, s);
    }
    if (options.random_h0) layer.h0 = random_uniform_vector<double>(n, rng, -s, s);
  }
  return p;
}

std::int64_t count_entries(const ModelParams& params, bool include_initial_states) {
  std::int64_t total = 0;
  const bool first_order = !bilinear_only(params.config.family);
  for (const auto& layer : params.layers) {
    if (first_order) total += layer.U.size() + layer.V.size() + layer.b.size();
    if (layer.A) total += layer.A->size();
    if (layer.cp) total += layer.cp->A.size() + layer.cp->B.size() + layer.cp->C.size();
    if (include_initial_states) total += layer.h0.size();
  }
  return total;
}

SequenceBatch SequenceBatch::slice(const std::vector<Index>& rows) const {
  SequenceBatch out;
  out.mask = mask;
  out.inputs.reserve(rows.size());
  for (Index r : rows) {
    out.inputs.push_back(inputs[static_cast<std::size_t>(r)]);
    if (!targets.empty()) out.targets.push_back(targets[static_cast<std::size_t>(r)]);
  }
  return out;
}

void accumulate_product(Mat& Z, const Mat& W, const Mat& X) {
  if (W.rows() != Z.rows() || W.cols() != X.rows() || Z.cols() != X.cols()) {
    throw std::invalid_argument(detail::concat("accumulate_product: ", Z.rows(), "x", Z.cols(), " += ", W.rows(), "x",
                                               W.cols(), " * ", X.rows(), "x", X.cols()));
  }
  for (Index k = 0; k < W.rows(); ++k)
    for (Index i = 0; i < W.cols(); ++i) Z.row(k) += W(k, i) * X.row(i);
}

BatchTrace forward(const ModelParams& params, const SequenceBatch& batch) {
  params.validate();
  check_batch(params, batch);
  const Index T = batch.length();
  const Index B = batch.size();
  const int L = params.depth();
  const Index n = params.hidden();
  const Activation& act = params.config.activation;
  const bool first_order = !bilinear_only(params.config.family);
  const bool depth_only = act.placement == Placement::kDepthOnly;

  BatchTrace tr;
  tr.T = T;
  tr.L = L;
  tr.batch = B;
  const auto rows = static_cast<std::size_t>(T + 1);
  const auto cols = static_cast<std::size_t>(L + 1);
  tr.state.assign(rows, std::vector<Mat>(cols));
  tr.pre.assign(rows, std::vector<Mat>(cols));
  tr.signal.assign(rows, std::vector<Mat>(cols));

  for (int l = 1; l <= L; ++l) {
    tr.state[0][static_cast<std::size_t>(l)] = params.layers[static_cast<std::size_t>(l - 1)].h0.replicate(1, B);
  }
  for (Index t = 1; t <= T; ++t) {
    Mat x(batch.input_dim(), B);
    for (Index b = 0; b < B; ++b) x.col(b) = batch.inputs[static_cast<std::size_t>(b)].row(t - 1).transpose();
    auto& st = tr.state[static_cast<std::size_t>(t)];
    auto& pr = tr.pre[static_cast<std::size_t>(t)];
    auto& sg = tr.signal[static_cast<std::size_t>(t)];
    st[0] = x;
    sg[0] = std::move(x);
    for (int l = 1; l <= L; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const LayerParams& layer = params.layers[li - 1];
      const Mat& h_prev = tr.state[static_cast<std::size_t>(t - 1)][li];
      const Mat& u = sg[li - 1];

      Mat z = Mat::Zero(n, B);
      if (layer.A) accumulate_bilinear(z, *layer.A, h_prev, u);
      if (layer.cp) accumulate_cp(z, *layer.cp, h_prev, u);
      if (first_order) {
        accumulate_product(z, layer.V, h_prev);
        accumulate_product(z, layer.U, u);
        z.colwise() += layer.b;
      }

      if (depth_only) {
        st[li] = z;
        if (l < L || act.activate_top) {
          apply_activation(act, z, sg[li]);
        } else {
          sg[li] = z;
        }
      } else {
        apply_activation(act, z, st[li]);
        sg[li] = st[li];
      }
      pr[li] = std::move(z);
      if (!all_finite(st[li]) || !all_finite(sg[li])) {
        throw NumericalError(detail::concat("forward: non-finite hidden state at t=", t, ", layer=", l));
      }
    }
  }
  return tr;
}

BatchTrace forward_rnn(const ModelParams& params, const SequenceBatch& batch) {
  if (params.config.family != Family::kRnn) {
    throw std::invalid_argument(
        detail::concat("forward_rnn: expected a first-order model, got ", to_string(params.config.family)));
  }
  return forward(params, batch);
}

BatchTrace forward_2rnn(const ModelParams& params, const SequenceBatch& batch) {
  if (!has_full_tensor(params.config.family)) {
    throw std::invalid_argument(
        detail::concat("forward_2rnn: expected a full-tensor model, got ", to_string(params.config.family)));
  }
  return forward(params, batch);
}

BatchTrace forward_cprnn(const ModelParams& params, const SequenceBatch& batch) {
  if (!has_cp(params.config.family)) {
    throw std::invalid_argument(
        detail::concat("forward_cprnn: expected a CP model, got ", to_string(params.config.family)));
  }
  return forward(params, batch);
}

HiddenTrace extract(const BatchTrace& trace, Index b) {
  HiddenTrace out;
  const auto copy = [b](const std::vector<std::vector<Mat>>& src, std::vector<std::vector<Vec>>& dst) {
    dst.resize(src.size());
    for (std::size_t t = 0; t < src.size(); ++t) {
      dst[t].resize(src[t].size());
      for (std::size_t l = 0; l < src[t].size(); ++l) {
        if (src[t][l].size() > 0) dst[t][l] = src[t][l].col(b);
      }
    }
  };
  copy(trace.state, out.h);
  copy(trace.pre, out.pre);
  copy(trace.signal, out.signal);
  return out;
}

HiddenTrace forward_sequence(const ModelParams& params, const Mat& inputs) {
  SequenceBatch batch;
  batch.inputs.push_back(inputs);
  return extract(forward(params, batch), 0);
}

Mat bilinear_map(const LayerParams& layer, const Vec& h_prev, Index input_dim) {
  if (layer.A) return mode_product(*layer.A, h_prev, 1).transpose();
  if (layer.cp) return cp_matrix(layer.cp->A, layer.cp->B, layer.cp->C, h_prev);
  return Mat::Zero(h_prev.size(), input_dim);
}

Vec unroll_closed_form(const ModelParams& params, const Mat& inputs, Index t, int l) {
  if (!params.config.activation.is_linear()) {
    throw std::invalid_argument("unroll_closed_form: model must be linear (identity activation)");
  }
  if (t < 1 || t > inputs.rows()) {
    throw std::invalid_argument(detail::concat("unroll_closed_form: t=", t, " outside 1..", inputs.rows()));
  }
  if (l < 1 || l > params.depth()) {
    throw std::invalid_argument(detail::concat("unroll_closed_form: l=", l, " outside 1..", params.depth()));
  }
  const HiddenTrace tr = forward_sequence(params, inputs);
  const auto prev = static_cast<std::size_t>(t - 1);

  std::vector<Mat> ubar;
  std::vector<Vec> bbar;
  for (int i = 1; i <= l; ++i) {
    const LayerParams& layer = params.layers[static_cast<std::size_t>(i - 1)];
    const Vec& h_prev = tr.h[prev][static_cast<std::size_t>(i)];
    ubar.push_back(bilinear_map(layer, h_prev, params.layer_input_dim(i - 1)) + layer.U);
    bbar.push_back(layer.V * h_prev + layer.b);
  }
  // chain(j) = Ubar^(l) ... Ubar^(j+1), an n x n identity when j == l.
  const auto chain = [&](int j) {
    Mat m = Mat::Identity(params.hidden(), params.hidden());
    for (int k = j + 1; k <= l; ++k) m = ubar[static_cast<std::size_t>(k - 1)] * m;
    return m;
  };
  Mat full = ubar[static_cast<std::size_t>(l - 1)];
  for (int i = l - 1; i >= 1; --i) full = full * ubar[static_cast<std::size_t>(i - 1)];

  Vec h = full * inputs.row(t - 1).transpose();
  for (int j = 1; j <= l; ++j) h += chain(j) * bbar[static_cast<std::size_t>(j - 1)];
  return h;
}

}  // namespace deeprnn

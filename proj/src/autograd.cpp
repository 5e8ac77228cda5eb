// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deeprnn {

namespace {

Mat column_stack(const SequenceBatch& batch, Index t) {
  Mat y(batch.output_dim(), batch.size());
  for (Index b = 0; b < batch.size(); ++b) y.col(b) = batch.targets[static_cast<std::size_t>(b)].row(t - 1).transpose();
  return y;
}

bool counted(const SequenceBatch& batch, const LossOptions& o, Index t) {
  return !o.masked || batch.mask.empty() || batch.mask[static_cast<std::size_t>(t - 1)] != 0;
}

Index counted_steps(const SequenceBatch& batch, const LossOptions& o) {
  Index c = 0;
  for (Index t = 1; t <= batch.length(); ++t) c += counted(batch, o, t) ? 1 : 0;
  return c;
}

void check_targets(const BatchTrace& trace, const SequenceBatch& batch, const Readout* head) {
  if (batch.targets.size() != batch.inputs.size()) throw std::invalid_argument("loss: targets missing for some inputs");
  const Index width = trace.output(1).rows();
  const Index d_out = batch.output_dim();
  for (const auto& y : batch.targets) {
    if (y.rows() != trace.T || y.cols() != d_out) throw std::invalid_argument("loss: ragged targets");
  }
  if (head) {
    if (head->W.rows() != d_out || head->W.cols() != width || head->c.size() != d_out) {
      throw std::invalid_argument(detail::concat("loss: readout is ", head->W.rows(), "x", head->W.cols(),
                                                 ", expected ", d_out, "x", width));
    }
  } else if (width != d_out) {
    throw std::invalid_argument(
        detail::concat("loss: output width ", width, " differs from target dim ", d_out, " and no readout given"));
  }
  if (!batch.mask.empty() && static_cast<Index>(batch.mask.size()) != trace.T) {
    throw std::invalid_argument("loss: mask length differs from sequence length");
  }
}

Mat predict(const Mat& out, const Readout* head) {
  if (!head) return out;
  Mat y = head->W * out;
  y.colwise() += head->c;
  return y;
}

template <typename F>
void for_each_block(ModelParams& params, Readout* head, F&& f) {
  for (auto& layer : params.layers) {
    f(layer.U);
    f(layer.V);
    f(layer.b);
    f(layer.h0);
    if (layer.A) f(layer.A->data());
    if (layer.cp) {
      f(layer.cp->A);
      f(layer.cp->B);
      f(layer.cp->C);
    }
  }
  if (head) {
    f(head->W);
    f(head->c);
  }
}

Index flat_size(const ModelParams& params, const Readout* head) {
  Index s = 0;
  for_each_block(const_cast<ModelParams&>(params), const_cast<Readout*>(head), [&](auto& m) { s += m.size(); });
  return s;
}

}  // namespace

Readout zero_readout(Index d_out, Index n) { return {Mat::Zero(d_out, n), Vec::Zero(d_out)}; }

Readout random_readout(Index d_out, Index n, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  return {random_uniform<double>(d_out, n, rng, -s, s), Vec::Zero(d_out)};
}

Gradients zero_gradients(const ModelParams& params, const Readout* head) {
  Gradients g;
  ModelParams z = zero_params(params.config);
  g.layers = std::move(z.layers);
  if (head) g.head = zero_readout(head->W.rows(), head->W.cols());
  return g;
}

double loss_mse(const BatchTrace& trace, const SequenceBatch& batch, const Readout* head, const LossOptions& options) {
  check_targets(trace, batch, head);
  const Index steps = counted_steps(batch, options);
  if (steps == 0) return 0.0;
  double sum = 0.0;
  for (Index t = 1; t <= trace.T; ++t) {
    if (!counted(batch, options, t)) continue;
    sum += (predict(trace.output(t), head) - column_stack(batch, t)).squaredNorm();
  }
  return sum / static_cast<double>(steps * batch.size() * batch.output_dim());
}

double loss_mse(const HiddenTrace& trace, const Mat& targets, const Readout* head) {
  const Index T = trace.length();
  if (targets.rows() != T) throw std::invalid_argument("loss: targets length differs from trace");
  double sum = 0.0;
  for (Index t = 1; t <= T; ++t) {
    Vec y = trace.output(t);
    if (head) y = head->W * y + head->c;
    if (y.size() != targets.cols()) throw std::invalid_argument("loss: output width differs from target dim");
    sum += (y - targets.row(t - 1).transpose()).squaredNorm();
  }
  return sum / static_cast<double>(T * targets.cols());
}

LossAndGradients backward(const ModelParams& params, const SequenceBatch& batch, const Readout* head,
                          const LossOptions& options) {
  return backward(params, forward(params, batch), batch, head, options);
}

LossAndGradients backward(const ModelParams& params, const BatchTrace& tr, const SequenceBatch& batch,
                          const Readout* head, const LossOptions& options) {
  check_targets(tr, batch, head);
  const Index T = tr.T;
  const int L = tr.L;
  const Index B = tr.batch;
  const Index n = params.hidden();
  const Activation& act = params.config.activation;
  const bool first_order = !bilinear_only(params.config.family);
  const bool depth_only = act.placement == Placement::kDepthOnly;

  LossAndGradients out;
  out.grads = zero_gradients(params, head);
  const Index steps = counted_steps(batch, options);
  if (steps == 0) return out;
  const double scale = 2.0 / static_cast<double>(steps * B * batch.output_dim());

  const auto deriv = [&act](const Mat& z) { return Mat(z.unaryExpr([&act](double v) { return act.derivative(v); })); };

  std::vector<Mat> carry(static_cast<std::size_t>(L + 1), Mat::Zero(n, B));  // dLoss/dh_t^(l) via step t+1
  double sum = 0.0;
  for (Index t = T; t >= 1; --t) {
    const auto ti = static_cast<std::size_t>(t);
    std::vector<Mat> g_sig(static_cast<std::size_t>(L + 1));  // dLoss/dsignal[t][l]
    const Mat& top = tr.output(t);
    if (counted(batch, options, t)) {
      const Mat err = predict(top, head) - column_stack(batch, t);
      sum += err.squaredNorm();
      const Mat dy = scale * err;
      if (head) {
        out.grads.head->W.noalias() += dy * top.transpose();
        out.grads.head->c += dy.rowwise().sum();
        g_sig[static_cast<std::size_t>(L)] = head->W.transpose() * dy;
      } else {
        g_sig[static_cast<std::size_t>(L)] = dy;
      }
    } else {
      g_sig[static_cast<std::size_t>(L)] = Mat::Zero(top.rows(), B);
    }

    for (int l = L; l >= 1; --l) {
      const auto li = static_cast<std::size_t>(l);
      const LayerParams& layer = params.layers[li - 1];
      LayerParams& grad = out.grads.layers[li - 1];
      const Mat& z = tr.pre[ti][li];
      const Mat& hp = tr.state[ti - 1][li];
      const Mat& u = tr.signal[ti][li - 1];

      // Recurrent: h = s(z), signal = h.  Depth-only: h = z, signal = s(z) below the top.
      Mat dz;
      if (depth_only) {
        const bool activated = l < L || act.activate_top;
        dz = carry[li] + (activated ? Mat(g_sig[li].cwiseProduct(deriv(z))) : g_sig[li]);
      } else {
        dz = (carry[li] + g_sig[li]).cwiseProduct(deriv(z));
      }
      if (!all_finite(dz)) throw NumericalError(detail::concat("backward: non-finite gradient at t=", t, ", layer=", l));

      Mat dh = Mat::Zero(n, B);
      Mat du = Mat::Zero(u.rows(), B);
      if (first_order) {
        // z = V h' + U u + b
        grad.V.noalias() += dz * hp.transpose();
        grad.U.noalias() += dz * u.transpose();
        grad.b += dz.rowwise().sum();
        dh.noalias() += layer.V.transpose() * dz;
        du.noalias() += layer.U.transpose() * dz;
      }
      if (layer.A) {
        // z_k = sum_ij A_ijk h'_i u_j
        const Tensor3d& A = *layer.A;
        Tensor3d& dA = *grad.A;
        const auto unf = A.unfold_last();  // (i, j) x k
        auto dunf = dA.unfold_last();
        const Mat w = unf * dz;            // (i, j) x B: sum_k A_ijk dz_k
        for (Index i = 0; i < A.dim(0); ++i)
          for (Index j = 0; j < A.dim(1); ++j) {
            const Index r = i * A.dim(1) + j;
            dunf.row(r).noalias() += (hp.row(i).cwiseProduct(u.row(j))) * dz.transpose();
            dh.row(i) += w.row(r).cwiseProduct(u.row(j));
            du.row(j) += w.row(r).cwiseProduct(hp.row(i));
          }
      }
      if (layer.cp) {
        // z = C ((A^T h') .* (B^T u))
        const CpFactors& cp = *layer.cp;
        CpFactors& dcp = *grad.cp;
        const Mat a = cp.A.transpose() * hp;
        const Mat bb = cp.B.transpose() * u;
        const Mat g = cp.C.transpose() * dz;
        const Mat gb = g.cwiseProduct(bb);
        const Mat ga = g.cwiseProduct(a);
        dcp.C.noalias() += dz * a.cwiseProduct(bb).transpose();
        dcp.A.noalias() += hp * gb.transpose();
        dcp.B.noalias() += u * ga.transpose();
        dh.noalias() += cp.A * gb;
        du.noalias() += cp.B * ga;
      }
      if (t == 1) {
        grad.h0 += dh.rowwise().sum();
      }
      carry[li] = std::move(dh);
      if (l > 1) g_sig[li - 1] = std::move(du);
    }
  }
  out.loss = sum / static_cast<double>(steps * B * batch.output_dim());
  return out;
}

Vec flatten(const ModelParams& params, const Readout* head) {
  Vec theta(flat_size(params, head));
  Index at = 0;
  for_each_block(const_cast<ModelParams&>(params), const_cast<Readout*>(head), [&](auto& m) {
    theta.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
    at += m.size();
  });
  return theta;
}

Vec flatten(const Gradients& grads) {
  ModelParams shell;
  shell.layers = grads.layers;
  return flatten(shell, grads.head ? &*grads.head : nullptr);
}

void unflatten(const Vec& theta, ModelParams& params, Readout* head) {
  if (theta.size() != flat_size(params, head)) {
    throw std::invalid_argument(detail::concat("unflatten: got ", theta.size(), " entries, expected ",
                                               flat_size(params, head)));
  }
  Index at = 0;
  for_each_block(params, head, [&](auto& m) {
    Eigen::Map<Vec>(m.data(), m.size()) = theta.segment(at, m.size());
    at += m.size();
  });
}

void adam_step(Vec& theta, Vec g, AdamState& s, const AdamHyper& h) {
  if (s.m.size() == 0) {
    s.m = Vec::Zero(theta.size());
    s.v = Vec::Zero(theta.size());
  }
  if (s.m.size() != theta.size() || g.size() != theta.size()) {
    throw std::invalid_argument(detail::concat("adam_step: sizes differ (theta ", theta.size(), ", grad ", g.size(),
                                               ", state ", s.m.size(), ")"));
  }
  if (h.clip > 0) {
    const double norm = g.norm();
    if (norm > h.clip) g *= h.clip / norm;
  }
  ++s.step;
  s.m = h.beta1 * s.m + (1.0 - h.beta1) * g;
  s.v = h.beta2 * s.v + (1.0 - h.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
  theta.array() -= h.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + h.eps);
}

void adam_step(ModelParams& params, Readout* head, const Gradients& grads, AdamState& state, const AdamHyper& hyper) {
  Vec theta = flatten(params, head);
  adam_step(theta, flatten(grads), state, hyper);
  unflatten(theta, params, head);
}

GradCheck gradient_check(const ModelParams& params, const SequenceBatch& batch, const Readout* head,
                         const LossOptions& options, double h) {
  const LossAndGradients base = backward(params, batch, head, options);
  const Vec g = flatten(base.grads);
  ModelParams p = params;
  std::optional<Readout> r;
  if (head) r = *head;
  Readout* rp = r ? &*r : nullptr;
  const Vec theta = flatten(params, head);
  Vec fd(theta.size());
  const auto loss_at = [&](const Vec& th) {
    unflatten(th, p, rp);
    return loss_mse(forward(p, batch), batch, rp, options);
  };
  const bool bilinear = bilinear_only(params.config.family);
  // Structurally zero entries of bilinear-only models are not free parameters.
  Vec frozen = Vec::Zero(theta.size());
  if (bilinear) {
    Index at = 0;
    for (const auto& layer : params.layers) {
      const Index first = layer.U.size() + layer.V.size() + layer.b.size();
      frozen.segment(at, first).setOnes();
      at += first + layer.h0.size() + (layer.A ? layer.A->size() : 0) +
            (layer.cp ? layer.cp->A.size() + layer.cp->B.size() + layer.cp->C.size() : 0);
    }
  }
  for (Index i = 0; i < theta.size(); ++i) {
    if (frozen(i) != 0.0) {
      fd(i) = 0.0;
      continue;
    }
    Vec up = theta, down = theta;
    up(i) += h;
    down(i) -= h;
    fd(i) = (loss_at(up) - loss_at(down)) / (up(i) - down(i));
  }
  GradCheck out;
  out.size = theta.size();
  out.max_abs_error = (g - fd).cwiseAbs().maxCoeff();
  out.noise_floor = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(base.loss) / h;
  const double ref = fd.cwiseAbs().maxCoeff();
  out.fd_norm = ref;
  out.max_rel_error = ref > 0 ? out.max_abs_error / ref : (out.max_abs_error > 0 ? INFINITY : 0.0);
  return out;
}

GradSweep gradient_check_sweep(Family family, Placement placement, int configs, std::uint64_t seed) {
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(family) * 2 + static_cast<std::uint64_t>(placement));
  GradSweep out;
  int trial = 0;
  while (out.configs < configs) {
    const int n = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(3));
    const int d = 1 + static_cast<int>(rng.below(3)), R = has_cp(family) ? 1 + static_cast<int>(rng.below(3)) : 0;
    const Index T = 1 + static_cast<Index>(rng.below(4));
    ModelConfig c{family, L, n, d, R, Activation{ActivationKind::kTanh, placement, trial % 3 == 0}};
    const ModelParams p = random_params(c, rng, {bilinear_only(family) ? 1.5 : 0.0, true});
    const bool with_head = trial % 2 == 0;
    const Readout head = random_readout(2, n, rng);
    SequenceBatch b;
    for (int i = 0; i < 3; ++i) {
      b.inputs.push_back(random_normal<double>(T, d, rng));
      b.targets.push_back(random_normal<double>(T, with_head ? 2 : n, rng));
    }
    ++trial;
    const GradCheck gc = gradient_check(p, b, with_head ? &head : nullptr);
    if (!gc.resolvable()) {
      if (++out.redraws > configs) throw NumericalError("gradient_check_sweep: too many unresolvable draws");
      continue;
    }
    ++out.configs;
    if (gc.max_rel_error >= out.worst_rel_error) {
      out.worst_rel_error = gc.max_rel_error;
      out.worst = detail::concat("n=", n, " L=", L, " d=", d, " R=", R, " T=", T, with_head ? " readout" : "");
    }
  }
  return out;
}

}  // namespace deeprnn

// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "deeprnn/serialize.hpp"

namespace deeprnn {

namespace {

// Every hidden state and layer signal for t >= 1, l >= 1, stacked into one vector.
Vec full_trace(const ModelParams& params, const Mat& x) {
  const HiddenTrace tr = forward_sequence(params, x);
  const Index T = tr.length();
  const int L = tr.depth();
  const Index n = params.hidden();
  Vec out(2 * T * L * n);
  Index at = 0;
  for (Index t = 1; t <= T; ++t)
    for (int l = 1; l <= L; ++l) {
      const auto ti = static_cast<std::size_t>(t), li = static_cast<std::size_t>(l);
      out.segment(at, n) = tr.h[ti][li];
      out.segment(at + n, n) = tr.signal[ti][li];
      at += 2 * n;
    }
  return out;
}

Vec h1_top(const ModelParams& params, const Vec& x1) {
  return forward_sequence(params, x1.transpose()).output(1);
}

}  // namespace

nlohmann::json to_json(const Verdict& v) {
  return {{"claim", v.claim},         {"params_hash", v.params_hash}, {"verdict", v.passed ? "pass" : "fail"},
          {"residual", v.residual},   {"tolerance", v.tolerance},     {"detail", v.detail},
          {"metrics", v.metrics}};
}

std::string params_hash(const ModelParams& params) { return hex64(json_hash(to_json(params))); }

SequenceFunction output_at(const ModelParams& params, Index t) {
  return [params, t](const Mat& x) { return Vec(forward_sequence(params, x).output(t)); };
}

Verdict check_affine(const ModelParams& params, const AffineOptions& options) {
  params.validate();
  if (options.require_linear && !params.config.activation.is_linear()) {
    throw std::invalid_argument("check_affine: model is nonlinear");
  }
  if (options.T < 1 || options.trials < 1) throw std::invalid_argument("check_affine: need T >= 1 and trials >= 1");
  const Index d = params.config.input_dim;
  const Vec g0 = full_trace(params, Mat::Zero(options.T, d));
  const auto g = [&](const Mat& x) -> Vec { return full_trace(params, x) - g0; };

  Verdict v;
  v.claim = "affine";
  v.tolerance = options.tol;
  v.params_hash = params_hash(params);
  const Rng root(options.seed);
  for (int trial = 0; trial < options.trials; ++trial) {
    Rng rng = root.split(static_cast<std::uint64_t>(trial));
    const Mat x = random_normal<double>(options.T, d, rng);
    const Mat y = random_normal<double>(options.T, d, rng);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const Vec lhs = g(a * x + b * y);
    const Vec rhs = a * g(x) + b * g(y);
    v.residual = std::max(v.residual, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  v.passed = v.residual < options.tol;
  v.detail = detail::concat("max |g(ax+by) - a g(x) - b g(y)| over ", options.trials, " trials, T=", options.T);
  return v;
}

DegreeReport estimate_degree(const SequenceFunction& f, const DegreeOptions& o) {
  if (o.T < 1 || o.input_dim < 1) throw std::invalid_argument("estimate_degree: need T >= 1 and input_dim >= 1");
  if (o.which_input < 0 || o.which_input > o.T) {
    throw std::invalid_argument(detail::concat("estimate_degree: which_input ", o.which_input, " outside 0..", o.T));
  }
  if (o.max_deg < 0) throw std::invalid_argument("estimate_degree: max_deg must be >= 0");

  Rng rng(o.seed);
  DegreeReport r;
  r.probe_point = o.base ? *o.base : random_normal<double>(o.T, o.input_dim, rng);
  if (o.direction) {
    r.direction = *o.direction;
  } else {
    r.direction = random_normal<double>(o.T, o.input_dim, rng);
    if (o.which_input > 0) {
      const Mat row = r.direction.row(o.which_input - 1);
      r.direction.setZero();
      r.direction.row(o.which_input - 1) = row;
    }
  }
  if (r.probe_point.rows() != o.T || r.probe_point.cols() != o.input_dim || r.direction.rows() != o.T ||
      r.direction.cols() != o.input_dim) {
    throw std::invalid_argument("estimate_degree: base/direction must be T x input_dim");
  }

  const int m = o.max_deg + 2;
  std::vector<Vec> values;
  values.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double s = std::cos(std::numbers::pi * (i + 0.5) / m);
    values.push_back(f(r.probe_point + s * r.direction));
  }
  const Index q = values.front().size();
  // Discrete Chebyshev transform; exact for polynomials of degree < m.
  Mat coef = Mat::Zero(m, q);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) coef.row(j) += std::cos(std::numbers::pi * j * (i + 0.5) / m) * values[static_cast<std::size_t>(i)].transpose();
    coef.row(j) *= (j == 0 ? 1.0 : 2.0) / m;
  }
  const Vec mags = coef.cwiseAbs().rowwise().maxCoeff();
  const double scale = mags.maxCoeff();
  if (!std::isfinite(scale)) throw NumericalError("estimate_degree: non-finite function values");
  if (scale == 0.0) return r;

  int deg = 0;
  for (int j = m - 1; j >= 0; --j)
    if (mags(j) > o.tol * scale) {
      deg = j;
      break;
    }
  r.estimated_degree = deg;
  r.exceeds_max = deg > o.max_deg;
  r.leading = mags(deg) / scale;
  r.residual = deg + 1 < m ? mags.tail(m - deg - 1).maxCoeff() / scale : 0.0;
  return r;
}

Verdict check_degree_bound_TL(const ModelParams& params, Index T, double tol, std::uint64_t seed) {
  params.validate();
  if (!bilinear_only(params.config.family) || !params.config.activation.is_linear()) {
    throw std::invalid_argument("check_degree_bound_TL: model must be a linear bilinear-only network");
  }
  if (T < 1) throw std::invalid_argument("check_degree_bound_TL: T must be >= 1");
  double bound_d = std::pow(static_cast<double>(T), params.depth());
  if (bound_d > 60) throw std::invalid_argument("check_degree_bound_TL: T^L too large to probe");
  const int bound = static_cast<int>(bound_d);

  DegreeOptions o;
  o.T = T;
  o.input_dim = params.config.input_dim;
  o.which_input = 0;
  o.max_deg = bound;
  o.tol = tol;
  o.seed = seed;
  const DegreeReport r = estimate_degree(output_at(params, T), o);

  Verdict v;
  v.claim = "degree_bound_TL";
  v.tolerance = tol;
  v.params_hash = params_hash(params);
  v.passed = !r.exceeds_max && r.estimated_degree <= bound;
  v.residual = r.residual;
  v.metrics = {{"degree", r.estimated_degree}, {"bound", bound}, {"T", T}, {"L", params.depth()}};
  v.detail = detail::concat("degree of h_T^(L) along a joint line: ", r.estimated_degree, " (bound ", bound, ")");
  return v;
}

Mat jacobian_h1(const ModelParams& params, const Vec& x1) {
  params.validate();
  if (!has_cp(params.config.family) || !bilinear_only(params.config.family)) {
    throw std::invalid_argument("jacobian_h1: model must be a CP bilinear-only network");
  }
  if (!params.config.activation.is_linear()) throw std::invalid_argument("jacobian_h1: model must be linear");
  if (x1.size() != params.config.input_dim) {
    throw std::invalid_argument(detail::concat("jacobian_h1: x1 has dim ", x1.size(), ", expected ",
                                               params.config.input_dim));
  }
  Mat J(params.hidden(), x1.size());
  for (Index j = 0; j < x1.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x1(j)));
    Vec up = x1, down = x1;
    up(j) += h;
    down(j) -= h;
    J.col(j) = (h1_top(params, up) - h1_top(params, down)) / (up(j) - down(j));
  }
  return J;
}

int jacobian_rank_h1(const ModelParams& params, const Vec& x1, double tol) { return rank(jacobian_h1(params, x1), tol); }

Verdict check_concat_equiv(const ModelParams& deep, const ModelParams& shallow, const ConcatOptions& options) {
  deep.validate();
  shallow.validate();
  const Index width = deep.hidden() * deep.depth();
  if (shallow.depth() != 1 || shallow.hidden() != width) {
    throw std::invalid_argument(detail::concat("check_concat_equiv: shallow must be one layer of width ", width,
                                               ", got depth ", shallow.depth(), " width ", shallow.hidden()));
  }
  if (shallow.config.input_dim != deep.config.input_dim) {
    throw std::invalid_argument("check_concat_equiv: input dimensions differ");
  }
  const Index n = deep.hidden();
  Verdict v;
  v.claim = "concat_equiv";
  v.tolerance = options.tol;
  v.params_hash = params_hash(deep) + ":" + params_hash(shallow);
  const Rng root(options.seed);
  for (int trial = 0; trial < options.trials; ++trial) {
    Rng rng = root.split(static_cast<std::uint64_t>(trial));
    const Mat x = random_normal<double>(options.T, deep.config.input_dim, rng);
    const HiddenTrace a = forward_sequence(deep, x);
    const HiddenTrace b = forward_sequence(shallow, x);
    for (Index t = 0; t <= options.T; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      Vec stack(width);
      for (int l = 1; l <= deep.depth(); ++l) stack.segment((l - 1) * n, n) = a.h[ti][static_cast<std::size_t>(l)];
      const double err = (b.h[ti][1] - stack).norm() / std::max(1.0, stack.norm());
      v.residual = std::max(v.residual, err);
    }
  }
  v.passed = v.residual < options.tol;
  v.detail = detail::concat("max relative error over t <= ", options.T, ", ", options.trials, " trials");
  return v;
}

}  // namespace deeprnn

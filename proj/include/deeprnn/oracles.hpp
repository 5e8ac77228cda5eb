// SPDX-License-Identifier: Apache-2.0
//
// Numerical verifiers for structural claims about recurrent models: affinity
// of linear networks, polynomial degree along a line, Jacobian rank at the
// first step, and equivalence between a deep net and its flattened form.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include "deeprnn/models.hpp"

namespace deeprnn {

struct Verdict {
  std::string claim;
  bool passed = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string params_hash;
  std::string detail;
  nlohmann::json metrics = nlohmann::json::object();

  explicit operator bool() const { return passed; }
};

nlohmann::json to_json(const Verdict& v);

/// FNV-1a hash of the model's JSON form, as 16 hex digits.
std::string params_hash(const ModelParams& params);

/// A function of a whole input sequence (T x d) returning a vector.
using SequenceFunction = std::function<Vec(const Mat&)>;

/// x -> h_t^(L), t 1-based.
SequenceFunction output_at(const ModelParams& params, Index t);

struct AffineOptions {
  Index T = 4;
  int trials = 10;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  /// When false, nonlinear models are probed instead of rejected.
  bool require_linear = true;
};

/// g(x) = vec(all hidden states) - vec(states at x = 0) must satisfy
/// g(a x + b y) = a g(x) + b g(y). Residual is the largest absolute deviation.
Verdict check_affine(const ModelParams& params, const AffineOptions& options = {});

struct DegreeOptions {
  Index T = 2;
  Index input_dim = 1;
  /// 1-based time index of the probed input; 0 moves every input jointly.
  Index which_input = 1;
  int max_deg = 8;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  /// Base point and direction (T x d). Drawn from N(0, 1) when absent; a
  /// single-input probe keeps only row which_input - 1 of a drawn direction.
  std::optional<Mat> base;
  std::optional<Mat> direction;
};

struct DegreeReport {
  Mat direction;
  Mat probe_point;
  int estimated_degree = 0;
  bool exceeds_max = false;
  /// Largest |coefficient| above the reported degree, relative to the largest overall.
  double residual = 0.0;
  /// |coefficient| at the reported degree, same scale.
  double leading = 0.0;
};

/// Degree of s -> f(x0 + s v) from Chebyshev interpolation at max_deg + 2
/// nodes on [-1, 1]. Coefficients below tol times the largest one count as zero.
DegreeReport estimate_degree(const SequenceFunction& f, const DegreeOptions& options);

/// Linear bilinear-only models: total degree of h_T^(L) along a random joint
/// line through all inputs is at most T^L.
Verdict check_degree_bound_TL(const ModelParams& params, Index T, double tol = 1e-6, std::uint64_t seed = 0);

/// Numerical rank of d h_1^(L) / d x_1 for a linear CP bilinear-only model,
/// from central differences with step 1e-6 max(1, |x_j|).
int jacobian_rank_h1(const ModelParams& params, const Vec& x1, double tol = 1e-6);

/// Finite-difference Jacobian behind jacobian_rank_h1.
Mat jacobian_h1(const ModelParams& params, const Vec& x1);

struct ConcatOptions {
  Index T = 8;
  int trials = 5;
  double tol = 1e-12;
  std::uint64_t seed = 0;
};

/// The single-layer `shallow` state equals the stacked layer states of `deep`
/// at every step, on Gaussian inputs. Residual is the largest normwise
/// relative error ||h_shallow - stack|| / max(1, ||stack||).
Verdict check_concat_equiv(const ModelParams& deep, const ModelParams& shallow, const ConcatOptions& options = {});

}  // namespace deeprnn

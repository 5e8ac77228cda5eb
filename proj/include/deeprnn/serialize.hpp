// SPDX-License-Identifier: Apache-2.0
//
// JSON model files. Layout:
//
//   {
//     "format": "deeprnn.model", "version": 1,
//     "config": {"family": "2rnn", "depth": L, "hidden": n, "input_dim": d, "rank": R,
//                "activation": "tanh", "placement": "recurrent", "activate_top": false},
//     "layers": [
//       {"U":  {"rows": n, "cols": d, "data": [... row-major ...]},
//        "V":  {...}, "b": {"dim": n, "data": [...]}, "h0": {...},
//        "A":  {"dims": [n, d, n], "data": [... (i*d2 + j)*d3 + k ...]},   // optional
//        "cp": {"rank": R, "A": {...}, "B": {...}, "C": {...}}}           // optional
//     ]
//   }
//
// Doubles are written in shortest round-trip form, so save/load is bit-exact.
#pragma once

#include <string>

#include <nlohmann/json.hpp>
#include "deeprnn/models.hpp"

namespace deeprnn {

nlohmann::json to_json(const Mat& m);
nlohmann::json to_json(const Vec& v);
nlohmann::json to_json(const Tensor3d& t);
Mat matrix_from_json(const nlohmann::json& j);
Vec vector_from_json(const nlohmann::json& j);
Tensor3d tensor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelParams& p);
/// Parses and validates.
ModelParams model_from_json(const nlohmann::json& j);

void save_model(const ModelParams& p, const std::string& path);
ModelParams load_model(const std::string& path);

/// FNV-1a 64 of the canonical (key-sorted, compact) JSON dump.
std::uint64_t json_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

}  // namespace deeprnn

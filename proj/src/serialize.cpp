// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace deeprnn {

using nlohmann::json;

namespace {

std::vector<double> flat_data(const json& j, std::size_t expected, const char* what) {
  const auto& data = j.at("data");
  if (!data.is_array() || data.size() != expected) {
    throw std::invalid_argument(detail::concat(what, ": expected ", expected, " entries, found ",
                                               data.is_array() ? data.size() : 0));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : data) out.push_back(v.get<double>());
  return out;
}

}  // namespace

json to_json(const Mat& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json to_json(const Vec& v) {
  json data = json::array();
  for (Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  return {{"dim", v.size()}, {"data", std::move(data)}};
}

json to_json(const Tensor3d& t) {
  json data = json::array();
  for (Index i = 0; i < t.size(); ++i) data.push_back(t.data()(i));
  return {{"dims", {t.dim(0), t.dim(1), t.dim(2)}}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  if (rows < 0 || cols < 0) throw std::invalid_argument("matrix: negative dims");
  const auto data = flat_data(j, static_cast<std::size_t>(rows * cols), "matrix");
  return Eigen::Map<const Mat>(data.data(), rows, cols);
}

Vec vector_from_json(const json& j) {
  const auto dim = j.at("dim").get<Index>();
  if (dim < 0) throw std::invalid_argument("vector: negative dim");
  const auto data = flat_data(j, static_cast<std::size_t>(dim), "vector");
  return Eigen::Map<const Vec>(data.data(), dim);
}

Tensor3d tensor_from_json(const json& j) {
  const auto dims = j.at("dims").get<std::vector<Index>>();
  if (dims.size() != 3) throw std::invalid_argument("tensor: dims must have three entries");
  Tensor3d t(dims[0], dims[1], dims[2]);
  const auto data = flat_data(j, static_cast<std::size_t>(t.size()), "tensor");
  t.data() = Eigen::Map<const Vec>(data.data(), t.size());
  return t;
}

json to_json(const ModelConfig& c) {
  return {{"family", to_string(c.family)},
          {"depth", c.depth},
          {"hidden", c.hidden},
          {"input_dim", c.input_dim},
          {"rank", c.rank},
          {"activation", to_string(c.activation.kind)},
          {"placement", to_string(c.activation.placement)},
          {"activate_top", c.activation.activate_top}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.family = family_from_string(j.at("family").get<std::string>());
  c.depth = j.at("depth").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.input_dim = j.at("input_dim").get<int>();
  c.rank = j.value("rank", 0);
  c.activation.kind = activation_from_string(j.value("activation", std::string("identity")));
  c.activation.placement = placement_from_string(j.value("placement", std::string("recurrent")));
  c.activation.activate_top = j.value("activate_top", false);
  return c;
}

json to_json(const ModelParams& p) {
  json layers = json::array();
  for (const auto& layer : p.layers) {
    json jl = {{"U", to_json(layer.U)}, {"V", to_json(layer.V)}, {"b", to_json(layer.b)}, {"h0", to_json(layer.h0)}};
    if (layer.A) jl["A"] = to_json(*layer.A);
    if (layer.cp) {
      jl["cp"] = {{"rank", layer.cp->rank()},
                  {"A", to_json(layer.cp->A)},
                  {"B", to_json(layer.cp->B)},
                  {"C", to_json(layer.cp->C)}};
    }
    layers.push_back(std::move(jl));
  }
  return {{"format", "deeprnn.model"}, {"version", 1}, {"config", to_json(p.config)}, {"layers", std::move(layers)}};
}

ModelParams model_from_json(const json& j) {
  if (j.value("format", std::string()) != "deeprnn.model") {
    throw std::invalid_argument("model file: missing or wrong \"format\" tag");
  }
  if (j.value("version", 0) != 1) throw std::invalid_argument("model file: unsupported version");
  ModelParams p;
  p.config = config_from_json(j.at("config"));
  for (const auto& jl : j.at("layers")) {
    LayerParams layer;
    layer.U = matrix_from_json(jl.at("U"));
    layer.V = matrix_from_json(jl.at("V"));
    layer.b = vector_from_json(jl.at("b"));
    layer.h0 = vector_from_json(jl.at("h0"));
    if (jl.contains("A")) layer.A = tensor_from_json(jl.at("A"));
    if (jl.contains("cp")) {
      const auto& c = jl.at("cp");
      layer.cp = CpFactors{matrix_from_json(c.at("A")), matrix_from_json(c.at("B")), matrix_from_json(c.at("C"))};
    }
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

void save_model(const ModelParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(p).dump(1) << '\n';
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return model_from_json(json::parse(in));
}

std::uint64_t json_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace deeprnn

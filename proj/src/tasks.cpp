// SPDX-License-Identifier: Apache-2.0
#include "deeprnn/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace deeprnn {

namespace {

constexpr std::pair<TaskKind, std::string_view> kTaskNames[] = {
    {TaskKind::kCopy, "copy"},
    {TaskKind::kSinus, "sinus"},
    {TaskKind::kCopySinus, "copy_sinus"},
    {TaskKind::kParity, "parity"},
};

Mat draw_inputs(const TaskSpec& spec, Rng& rng) {
  Mat x(spec.T, spec.d);
  for (Index t = 0; t < spec.T; ++t)
    for (Index k = 0; k < spec.d; ++k) {
      double v = rng.normal();
      if (spec.kind == TaskKind::kParity) {
        while (v == 0.0) v = rng.normal();
        v = v > 0 ? 1.0 : -1.0;
      }
      x(t, k) = v;
    }
  return x;
}

SequenceBatch make_split(const TaskSpec& spec, Index count, Rng rng) {
  SequenceBatch b;
  b.mask = task_mask(spec);
  b.inputs.reserve(static_cast<std::size_t>(count));
  b.targets.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    b.inputs.push_back(draw_inputs(spec, rng));
    b.targets.push_back(task_targets(spec, b.inputs.back()));
  }
  return b;
}

TaskSplits generate_checked(const TaskSpec& spec, std::initializer_list<TaskKind> allowed, const char* who) {
  bool ok = false;
  for (TaskKind k : allowed) ok = ok || k == spec.kind;
  if (!ok) throw std::invalid_argument(detail::concat(who, ": task kind is ", to_string(spec.kind)));
  return generate(spec);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(TaskKind k) {
  for (const auto& [e, name] : kTaskNames)
    if (e == k) return name;
  return "?";
}

TaskKind task_kind_from_string(std::string_view s) {
  for (const auto& [e, name] : kTaskNames)
    if (name == s) return e;
  throw std::invalid_argument(detail::concat("unknown task '", s, "'"));
}

void TaskSpec::validate() const {
  if (d < 1 || T < 1) throw std::invalid_argument("task: d and T must be >= 1");
  if (p < 0) throw std::invalid_argument("task: lag must be >= 0");
  if (kind != TaskKind::kParity && p >= T) {
    throw std::invalid_argument(detail::concat("task: lag p=", p, " must be below T=", T));
  }
  if (train < 1 || val < 1 || test < 1) throw std::invalid_argument("task: split sizes must be >= 1");
}

TaskSpec default_task(TaskKind kind) {
  TaskSpec s;
  s.kind = kind;
  switch (kind) {
    case TaskKind::kCopy:
      break;
    case TaskKind::kSinus:
      s.p = 0;
      break;
    case TaskKind::kCopySinus:
      s.p = 4;
      break;
    case TaskKind::kParity:
      s.T = 20;
      s.p = 0;
      break;
  }
  return s;
}

Mat task_targets(const TaskSpec& spec, const Mat& x) {
  Mat y = Mat::Zero(x.rows(), x.cols());
  switch (spec.kind) {
    case TaskKind::kCopy:
      for (Index t = spec.p; t < x.rows(); ++t) y.row(t) = x.row(t - spec.p);
      break;
    case TaskKind::kSinus:
    case TaskKind::kCopySinus:
      for (Index t = spec.p; t < x.rows(); ++t)
        for (Index k = 0; k < x.cols(); ++k) y(t, k) = std::sin(spec.omega * x(t - spec.p, k));
      break;
    case TaskKind::kParity:
      if (x.rows() > 0) y.row(0) = x.row(0);
      for (Index t = 1; t < x.rows(); ++t) y.row(t) = y.row(t - 1).cwiseProduct(x.row(t));
      break;
  }
  return y;
}

std::vector<std::uint8_t> task_mask(const TaskSpec& spec) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(spec.T), 1);
  if (spec.kind == TaskKind::kParity) return m;
  for (Index t = 1; t <= spec.T; ++t) m[static_cast<std::size_t>(t - 1)] = t > spec.p ? 1 : 0;
  return m;
}

TaskSplits generate(const TaskSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  TaskSplits s;
  s.spec = spec;
  s.train = make_split(spec, spec.train, root.split(0));
  s.val = make_split(spec, spec.val, root.split(1));
  s.test = make_split(spec, spec.test, root.split(2));
  return s;
}

TaskSplits gen_copy(const TaskSpec& spec) { return generate_checked(spec, {TaskKind::kCopy}, "gen_copy"); }
TaskSplits gen_sinus(const TaskSpec& spec) { return generate_checked(spec, {TaskKind::kSinus}, "gen_sinus"); }
TaskSplits gen_copy_sinus(const TaskSpec& spec) {
  return generate_checked(spec, {TaskKind::kCopySinus}, "gen_copy_sinus");
}
TaskSplits gen_parity(const TaskSpec& spec) { return generate_checked(spec, {TaskKind::kParity}, "gen_parity"); }

double target_variance(const SequenceBatch& batch) {
  double sum = 0.0, sq = 0.0;
  Index count = 0;
  for (const auto& y : batch.targets) {
    sum += y.sum();
    sq += y.squaredNorm();
    count += y.size();
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  return sq / static_cast<double>(count) - mean * mean;
}

nlohmann::json to_json(const TaskSpec& s) {
  return {{"kind", to_string(s.kind)}, {"d", s.d},         {"T", s.T},       {"p", s.p},
          {"omega", s.omega},          {"train", s.train}, {"val", s.val},   {"test", s.test},
          {"seed", s.seed}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec s = default_task(task_kind_from_string(j.at("kind").get<std::string>()));
  s.d = j.value("d", s.d);
  s.T = j.value("T", s.T);
  s.p = j.value("p", s.p);
  s.omega = j.value("omega", s.omega);
  s.train = j.value("train", s.train);
  s.val = j.value("val", s.val);
  s.test = j.value("test", s.test);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

void write_dataset_csv(std::ostream& os, const TaskSplits& splits) {
  const TaskSpec& s = splits.spec;
  os << "# " << to_json(s).dump() << '\n';
  os << "split,sample,t";
  for (Index k = 1; k <= s.d; ++k) os << ",x" << k;
  for (Index k = 1; k <= s.d; ++k) os << ",y" << k;
  os << ",mask\n";
  const std::pair<const char*, const SequenceBatch*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, batch] : parts) {
    for (Index b = 0; b < batch->size(); ++b) {
      const Mat& x = batch->inputs[static_cast<std::size_t>(b)];
      const Mat& y = batch->targets[static_cast<std::size_t>(b)];
      for (Index t = 0; t < x.rows(); ++t) {
        os << name << ',' << b << ',' << t + 1;
        for (Index k = 0; k < x.cols(); ++k) os << ',' << fmt(x(t, k));
        for (Index k = 0; k < y.cols(); ++k) os << ',' << fmt(y(t, k));
        os << ',' << static_cast<int>(batch->mask[static_cast<std::size_t>(t)]) << '\n';
      }
    }
  }
}

TaskSplits read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw std::invalid_argument("dataset: missing spec line");
  TaskSplits out;
  out.spec = task_from_json(nlohmann::json::parse(line.substr(2)));
  const TaskSpec& s = out.spec;
  std::getline(is, line);  // column names
  for (auto* b : {&out.train, &out.val, &out.test}) b->mask = task_mask(s);
  std::size_t row = 2;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<Index>(cells.size()) != 4 + 2 * s.d) {
      throw std::invalid_argument(detail::concat("dataset line ", row, ": expected ", 4 + 2 * s.d, " fields"));
    }
    SequenceBatch* b = cells[0] == "train" ? &out.train : cells[0] == "val" ? &out.val
                     : cells[0] == "test"  ? &out.test  : nullptr;
    if (!b) throw std::invalid_argument(detail::concat("dataset line ", row, ": unknown split '", cells[0], "'"));
    const auto sample = static_cast<std::size_t>(std::stoll(cells[1]));
    const Index t = std::stoll(cells[2]);
    if (t < 1 || t > s.T) throw std::invalid_argument(detail::concat("dataset line ", row, ": bad time index"));
    if (sample == b->inputs.size()) {
      b->inputs.push_back(Mat::Zero(s.T, s.d));
      b->targets.push_back(Mat::Zero(s.T, s.d));
    } else if (sample + 1 != b->inputs.size()) {
      throw std::invalid_argument(detail::concat("dataset line ", row, ": samples out of order"));
    }
    for (Index k = 0; k < s.d; ++k) {
      b->inputs[sample](t - 1, k) = std::stod(cells[static_cast<std::size_t>(3 + k)]);
      b->targets[sample](t - 1, k) = std::stod(cells[static_cast<std::size_t>(3 + s.d + k)]);
    }
  }
  return out;
}

}  // namespace deeprnn

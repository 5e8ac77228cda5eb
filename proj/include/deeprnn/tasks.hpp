// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic sequence tasks: lagged copy, lagged sine, and running parity.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>

#include <nlohmann/json.hpp>
#include "deeprnn/models.hpp"

namespace deeprnn {

enum class TaskKind { kCopy, kSinus, kCopySinus, kParity };

std::string_view to_string(TaskKind k);
TaskKind task_kind_from_string(std::string_view s);

/// Time indices are 1-based: the target at t depends on x_{t-p} when t > p and
/// is 0 (and masked out) otherwise. Parity ignores p and omega.
struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  Index d = 5;
  Index T = 16;
  Index p = 8;
  double omega = 3.0;
  Index train = 10000;
  Index val = 2000;
  Index test = 2000;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when p >= T or a size is non-positive.
  void validate() const;
};

/// Defaults per kind: copy (p=8, T=16), sinus (p=0), copy_sinus (p=4), parity (T=20); d=5 throughout.
TaskSpec default_task(TaskKind kind);

struct TaskSplits {
  TaskSpec spec;
  SequenceBatch train;
  SequenceBatch val;
  SequenceBatch test;
};

/// Train, validation and test come from the substreams split(0), split(1),
/// split(2) of Rng(spec.seed). Inputs are drawn sample by sample, time-major,
/// one normal() per entry.
TaskSplits generate(const TaskSpec& spec);
TaskSplits gen_copy(const TaskSpec& spec);
TaskSplits gen_sinus(const TaskSpec& spec);
TaskSplits gen_copy_sinus(const TaskSpec& spec);
TaskSplits gen_parity(const TaskSpec& spec);

/// Targets recomputed from an input sequence (T x d).
Mat task_targets(const TaskSpec& spec, const Mat& inputs);

/// mask[t-1] = (t > p); parity masks nothing.
std::vector<std::uint8_t> task_mask(const TaskSpec& spec);

/// Variance of the stored targets over every entry of a split.
double target_variance(const SequenceBatch& batch);

nlohmann::json to_json(const TaskSpec& spec);
TaskSpec task_from_json(const nlohmann::json& j);

// CSV layout:
//   # {"kind":"copy",...}            (spec as JSON)
//   split,sample,t,x1..xd,y1..yd,mask
//   train,0,1,...                    (%.17g, t 1-based)
void write_dataset_csv(std::ostream& os, const TaskSplits& splits);
TaskSplits read_dataset_csv(std::istream& is);

}  // namespace deeprnn

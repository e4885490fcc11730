// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Cyclic cosine-annealing learning rates for generating fusion candidates by
// finetuning, plus the checkpoint positions along the schedule.

#ifndef FUSEKIT_SCHEDULE_H_
#define FUSEKIT_SCHEDULE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fusekit {

inline constexpr double kDefaultStartLr = 0.005;

struct CosineCycleSchedule {
  double start_lr = kDefaultStartLr;
  std::uint32_t iterations_per_cycle = 1;
  std::uint32_t cycles = 1;
  std::uint32_t epochs_per_cycle = 1;

  std::uint64_t total_iterations() const {
    return std::uint64_t{iterations_per_cycle} * cycles;
  }
  std::uint32_t total_epochs() const { return cycles * epochs_per_cycle; }
  std::uint32_t iterations_per_epoch() const {
    return iterations_per_cycle / epochs_per_cycle;
  }
};

// Throws kInvalidArgument for non-positive rates or counts, or a cycle that
// does not split into whole epochs.
void validate(const CosineCycleSchedule& s);

// 0.5 * start_lr * (1 + cos(pi * T / N)) with T = t mod N.
double lr_at(const CosineCycleSchedule& s, std::uint64_t t);

struct ScheduleRow {
  std::uint64_t iteration = 0;
  std::uint32_t cycle = 0;
  double lr = 0.0;
  // Epoch whose checkpoint is stored at this row, -1 for unmarked rows.
  std::int64_t checkpoint_epoch = -1;
};

struct ScheduleTable {
  std::vector<ScheduleRow> rows;
  std::uint32_t marked_rows = 0;
  // Stored checkpoints plus the starting weight.
  std::uint32_t total_weights = 0;
};

// Epoch 0 marks the starting weight at iteration 0; epoch e > 0 marks the
// last iteration of that epoch.
ScheduleTable emit_schedule(const CosineCycleSchedule& s,
                            std::span<const std::uint32_t> checkpoint_epochs);

std::vector<std::uint32_t> cycle_end_epochs(const CosineCycleSchedule& s);

// Finetuning start rates 0.002, 0.004, ..., 0.02.
std::vector<double> finetune_learning_rates();
inline constexpr std::uint32_t kFinetuneEpochs = 10;

std::string schedule_csv(const ScheduleTable& table);

}  // namespace fusekit

#endif  // FUSEKIT_SCHEDULE_H_

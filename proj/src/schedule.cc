// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/schedule.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "fusekit/error.h"

namespace fusekit {

void validate(const CosineCycleSchedule& s) {
  if (!(s.start_lr > 0.0) || !std::isfinite(s.start_lr)) {
    throw Error(ErrorCode::kInvalidArgument, "start_lr must be positive");
  }
  if (s.iterations_per_cycle == 0 || s.cycles == 0 || s.epochs_per_cycle == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "iterations per cycle, cycles and epochs per cycle must be positive");
  }
  if (s.iterations_per_cycle % s.epochs_per_cycle != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "a cycle of " + std::to_string(s.iterations_per_cycle) +
                    " iterations does not split into " +
                    std::to_string(s.epochs_per_cycle) + " epochs");
  }
}

double lr_at(const CosineCycleSchedule& s, std::uint64_t t) {
  if (t >= s.total_iterations()) {
    throw Error(ErrorCode::kInvalidArgument,
                "iteration " + std::to_string(t) + " beyond the schedule's " +
                    std::to_string(s.total_iterations()));
  }
  const std::uint64_t n = s.iterations_per_cycle;
  const double phase = static_cast<double>(t % n) / static_cast<double>(n);
  return s.start_lr * (0.5 * (1.0 + std::cos(std::numbers::pi * phase)));
}

ScheduleTable emit_schedule(const CosineCycleSchedule& s,
                            std::span<const std::uint32_t> checkpoint_epochs) {
  validate(s);
  std::set<std::uint32_t> epochs;
  for (std::uint32_t e : checkpoint_epochs) {
    if (e > s.total_epochs()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "checkpoint epoch " + std::to_string(e) + " beyond the " +
                      std::to_string(s.total_epochs()) + "-epoch schedule");
    }
    epochs.insert(e);
  }

  ScheduleTable table;
  const std::uint64_t total = s.total_iterations();
  table.rows.reserve(total);
  for (std::uint64_t t = 0; t < total; ++t) {
    table.rows.push_back({t, static_cast<std::uint32_t>(t / s.iterations_per_cycle),
                          lr_at(s, t), -1});
  }
  for (std::uint32_t e : epochs) {
    const std::uint64_t row =
        e == 0 ? 0 : std::uint64_t{e} * s.iterations_per_epoch() - 1;
    table.rows[row].checkpoint_epoch = e;
    ++table.marked_rows;
  }
  table.total_weights = table.marked_rows + (epochs.count(0) ? 0 : 1);
  return table;
}

std::vector<std::uint32_t> cycle_end_epochs(const CosineCycleSchedule& s) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t c = 1; c <= s.cycles; ++c) out.push_back(c * s.epochs_per_cycle);
  return out;
}

std::vector<double> finetune_learning_rates() {
  std::vector<double> lrs;
  for (int k = 1; k <= 10; ++k) lrs.push_back(k / 500.0);
  return lrs;
}

std::string schedule_csv(const ScheduleTable& table) {
  std::string out = "iteration,cycle,lr,checkpoint_epoch\n";
  char line[96];
  for (const ScheduleRow& r : table.rows) {
    if (r.checkpoint_epoch >= 0) {
      std::snprintf(line, sizeof(line), "%llu,%u,%.17g,%lld\n",
                    static_cast<unsigned long long>(r.iteration), r.cycle, r.lr,
                    static_cast<long long>(r.checkpoint_epoch));
    } else {
      std::snprintf(line, sizeof(line), "%llu,%u,%.17g,\n",
                    static_cast<unsigned long long>(r.iteration), r.cycle, r.lr);
    }
    out += line;
  }
  return out;
}

}  // namespace fusekit

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chsnet/settings.hpp"
#include "chsnet/train_eval.hpp"

namespace chsnet {

struct AblationRow {
  double delta_max = 0.0;
  std::uint64_t seed = 0;
  EvalHead head = EvalHead::average;
  double mae = 0.0;
  double mse = 0.0;
};

struct AblationSummary {
  double delta_max = 0.0;
  EvalHead head = EvalHead::average;
  double mean_mae = 0.0;
  double mean_mse = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // 3 per run: conv, tran, average
  std::vector<AblationSummary> means;
};

// Training seed of the s-th repetition: master_seed + s.
std::uint64_t ablation_seed(std::uint64_t master_seed, int repetition);

// Trains one model per (delta_max, seed) cell, sequentially, into
// out_dir/runs/dmax_<value>_seed_<seed>/ and scores its final-epoch weights on
// the validation split.
AblationTable run_ablation(const Settings& settings, const std::filesystem::path& out_dir,
                           bool verbose = false);

AblationTable summarize(std::vector<AblationRow> rows);

// ablation.csv, ablation_means.csv and ablation.txt (aligned text).
void write_ablation(const AblationTable& table, const std::filesystem::path& out_dir);
std::string format_ablation_text(const AblationTable& table);

}  // namespace chsnet

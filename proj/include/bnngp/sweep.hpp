#pragma once

// Rank selection under a total time budget.

#include <optional>
#include <vector>

#include "bnngp/core.hpp"

namespace bnngp {

struct SweepRow {
  Eigen::Index rank = 0;
  double total_time = 0.0;  // training + prediction, seconds
  double mae = 0.0;
  double rmse = 0.0;
  double mese = 0.0;
};

struct BudgetChoice {
  double budget = 0.0;
  std::optional<SweepRow> r_max;   // largest rank with total_time <= budget
  std::optional<SweepRow> r_best;  // lowest RMSE with total_time <= budget
};

inline BudgetChoice choose_rank(const std::vector<SweepRow>& rows, double budget) {
  BudgetChoice c;
  c.budget = budget;
  for (const auto& r : rows) {
    if (!(r.total_time <= budget)) continue;
    if (!c.r_max || r.rank > c.r_max->rank) c.r_max = r;
    if (!c.r_best || r.rmse < c.r_best->rmse) c.r_best = r;
  }
  return c;
}

}  // namespace bnngp

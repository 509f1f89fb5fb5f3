#pragma once

#include <span>
#include <vector>

#include "lrs/model.hpp"

namespace lrs {

/// Sufficient statistics of one task's samples: X^T X, X^T y, m.
struct TaskCache {
  Matrix gram; // d x d
  Vector xty;  // d
  double samples = 0.0;

  static TaskCache from(const TaskDataset& data);
};

std::vector<TaskCache> build_caches(std::span<const TaskDataset> datasets);

/// Row subsets used when each update must see a fresh batch.
///
/// Chunk c holds the rows j with j % chunks == c, for every task.
std::vector<std::vector<TaskDataset>> split_rows(std::span<const TaskDataset> datasets,
                                                 int chunks);

} // namespace lrs

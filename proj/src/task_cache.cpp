#include "lrs/task_cache.hpp"

#include <string>

#include "lrs/errors.hpp"
#include "lrs/parallel.hpp"

namespace lrs {

TaskCache TaskCache::from(const TaskDataset& data) {
  TaskCache c;
  c.gram = data.x.transpose() * data.x;
  c.xty = data.x.transpose() * data.y;
  c.samples = static_cast<double>(data.samples());
  return c;
}

std::vector<TaskCache> build_caches(std::span<const TaskDataset> datasets) {
  std::vector<TaskCache> out(datasets.size());
  parallel_for(datasets.size(), [&](std::size_t i) { out[i] = TaskCache::from(datasets[i]); });
  return out;
}

std::vector<std::vector<TaskDataset>> split_rows(std::span<const TaskDataset> datasets,
                                                 int chunks) {
  if (chunks < 1) throw ConfigError("split: need at least one chunk");
  std::vector<std::vector<TaskDataset>> out(static_cast<std::size_t>(chunks));
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& data = datasets[i];
    const auto m = static_cast<int>(data.samples());
    if (m < chunks) {
      throw ConfigError("split batching: task " + std::to_string(i) + " has " + std::to_string(m) +
                        " samples, fewer than the " + std::to_string(chunks) +
                        " batches required");
    }
    for (int c = 0; c < chunks; ++c) {
      const int rows = (m - c + chunks - 1) / chunks;
      Matrix x(rows, data.x.cols());
      Vector y(rows);
      for (int j = c, n = 0; j < m; j += chunks, ++n) {
        x.row(n) = data.x.row(j);
        y[n] = data.y[j];
      }
      out[static_cast<std::size_t>(c)].emplace_back(std::move(x), std::move(y));
    }
  }
  return out;
}

} // namespace lrs

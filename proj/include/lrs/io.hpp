#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lrs/dp.hpp"
#include "lrs/model.hpp"
#include "lrs/solver_amht.hpp"

namespace lrs {

inline constexpr int kFormatVersion = 1;

struct DatasetMeta {
  int format_version = kFormatVersion;
  int d = 0;
  std::optional<int> r;
  int t = 0;
  int m = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// A directory holding meta.json, data.csv and optionally truth.json.
struct DatasetBundle {
  DatasetMeta meta;
  std::vector<TaskDataset> tasks;
  std::optional<GroundTruth> truth;
};

/// Writes the bundle; the directory is created if missing.
void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle read_bundle(const std::filesystem::path& dir);

/// Sample table with header task,y,x1..xd and one row per sample.
void write_samples_csv(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks);
/// Reads a sample table. Rows are grouped by task id, which must cover
/// 0..t-1. Errors carry the line and column of the offending field.
std::vector<TaskDataset> read_samples_csv(const std::filesystem::path& path, int d, int t);

std::string truth_to_json(const GroundTruth& gt);
GroundTruth truth_from_json(const std::string& text);

/// Contents of model.json.
struct ModelFile {
  ModelState state;
  int k = 0;
  std::optional<PrivacyLedger> ledger;
  std::optional<double> ledger_delta;
};

std::string model_to_json(const ModelFile& model);
ModelFile model_from_json(const std::string& text);
void write_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile read_model(const std::filesystem::path& path);

/// Per-iteration metrics: iteration,train_mse,subspace_dist,max_nnz,delta,wall_time_s.
std::string metrics_csv(const FitReport& report);
void write_metrics(const std::filesystem::path& path, const FitReport& report);

std::string ledger_to_json(const PrivacyLedger& ledger, double delta);
void write_ledger(const std::filesystem::path& path, const PrivacyLedger& ledger, double delta);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace lrs

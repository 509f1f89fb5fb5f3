#include "lrs/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lrs/errors.hpp"

namespace lrs {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& what, Eigen::Index rows,
                        Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw FormatError(what + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError(what + ": row " + std::to_string(i) + " must have " +
                        std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        throw FormatError(what + ": entry (" + std::to_string(i) + ", " + std::to_string(c) +
                          ") is not a number");
      }
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

const Json& field(const Json& obj, const char* key, const std::string& what) {
  if (!obj.is_object()) throw FormatError(what + ": expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(what + ": missing field '" + key + "'");
  return *it;
}

template <class T>
T number(const Json& obj, const char* key, const std::string& what) {
  const Json& v = field(obj, key, what);
  if (!v.is_number()) throw FormatError(what + ": field '" + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      throw FormatError(what + ": field '" + key + "' must be an integer");
    }
  }
  return v.get<T>();
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string expected_header(int d) {
  std::string h = "task,y";
  for (int j = 1; j <= d; ++j) h += ",x" + std::to_string(j);
  return h;
}

} // namespace

std::string format_double(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw ConfigError(path.string() + ": write failed");
}

void write_samples_csv(const fs::path& path, const std::vector<TaskDataset>& tasks) {
  if (tasks.empty()) throw DomainError("write_samples_csv: no tasks");
  const int d = static_cast<int>(tasks.front().dim());
  std::string out = expected_header(d) + "\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    for (Eigen::Index j = 0; j < task.x.rows(); ++j) {
      out += std::to_string(i);
      out += ',';
      out += g17(task.y[j]);
      for (Eigen::Index c = 0; c < task.x.cols(); ++c) {
        out += ',';
        out += g17(task.x(j, c));
      }
      out += '\n';
    }
  }
  write_text(path, out);
}

std::vector<TaskDataset> read_samples_csv(const fs::path& path, int d, int t) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  const std::string name = path.filename().string();
  const std::string header = expected_header(d);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(name + ": empty file, expected header " + header);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto got = split_fields(line);
  const auto want = split_fields(header);
  for (std::size_t c = 0; c < std::max(got.size(), want.size()); ++c) {
    if (c >= got.size()) {
      throw FormatError(name + ":1: missing column '" + want[c] + "' (expected header: " +
                        header + ")");
    }
    if (c >= want.size()) {
      throw FormatError(name + ":1: unexpected column '" + got[c] + "' at position " +
                        std::to_string(c + 1) + " (expected header: " + header + ")");
    }
    if (got[c] != want[c]) {
      throw FormatError(name + ":1: column " + std::to_string(c + 1) + " is '" + got[c] +
                        "', expected '" + want[c] + "' (expected header: " + header + ")");
    }
  }

  std::vector<std::vector<double>> ys(static_cast<std::size_t>(t));
  std::vector<std::vector<double>> xs(static_cast<std::size_t>(t));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != want.size()) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(want.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    long task = -1;
    {
      const auto& f = fields[0];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), task);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || task < 0 || task >= t) {
        throw FormatError(name + ":" + std::to_string(lineno) + ":1 (task): '" + f +
                          "' is not a task id in [0, " + std::to_string(t) + ")");
      }
    }
    auto& yv = ys[static_cast<std::size_t>(task)];
    auto& xv = xs[static_cast<std::size_t>(task)];
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto& f = fields[c];
      double value = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw FormatError(name + ":" + std::to_string(lineno) + ":" + std::to_string(c + 1) +
                          " (" + want[c] + "): cannot parse '" + f + "' as a number");
      }
      if (c == 1) {
        yv.push_back(value);
      } else {
        xv.push_back(value);
      }
    }
  }

  std::vector<TaskDataset> tasks;
  tasks.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    const auto& yv = ys[static_cast<std::size_t>(i)];
    if (yv.empty()) throw FormatError(name + ": task " + std::to_string(i) + " has no rows");
    const auto m = static_cast<Eigen::Index>(yv.size());
    Matrix x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs[static_cast<std::size_t>(i)].data(), m, d);
    tasks.emplace_back(std::move(x), Eigen::Map<const Vector>(yv.data(), m));
  }
  return tasks;
}

std::string truth_to_json(const GroundTruth& gt) {
  Json j;
  j["u_star"] = matrix_to_json(gt.u_star);
  j["w_star"] = matrix_to_json(gt.w_star);
  j["b_star"] = matrix_to_json(gt.b_star);
  j["sigma"] = gt.sigma;
  j["k"] = gt.k;
  j["zeta"] = gt.zeta;
  return j.dump(1) + "\n";
}

GroundTruth truth_from_json(const std::string& text) {
  const std::string what = "truth.json";
  const Json j = parse_json(text, what);
  const Json& u = field(j, "u_star", what);
  const Json& w = field(j, "w_star", what);
  if (!u.is_array() || u.empty() || !u[0].is_array() || !w.is_array() || w.empty()) {
    throw FormatError(what + ": u_star and w_star must be non-empty nested arrays");
  }
  const auto d = static_cast<Eigen::Index>(u.size());
  const auto r = static_cast<Eigen::Index>(u[0].size());
  const auto t = static_cast<Eigen::Index>(w.size());
  GroundTruth gt;
  gt.u_star = matrix_from_json(u, what + ": u_star", d, r);
  gt.w_star = matrix_from_json(w, what + ": w_star", t, r);
  gt.b_star = matrix_from_json(field(j, "b_star", what), what + ": b_star", d, t);
  gt.sigma = number<double>(j, "sigma", what);
  gt.k = number<int>(j, "k", what);
  gt.zeta = number<int>(j, "zeta", what);
  return gt;
}

void write_bundle(const fs::path& dir, const DatasetBundle& bundle) {
  fs::create_directories(dir);
  Json meta;
  meta["format_version"] = bundle.meta.format_version;
  meta["d"] = bundle.meta.d;
  if (bundle.meta.r) meta["r"] = *bundle.meta.r;
  meta["t"] = bundle.meta.t;
  meta["m"] = bundle.meta.m;
  meta["sigma"] = bundle.meta.sigma;
  meta["seed"] = bundle.meta.seed;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  write_samples_csv(dir / "data.csv", bundle.tasks);
  if (bundle.truth) write_text(dir / "truth.json", truth_to_json(*bundle.truth));
}

DatasetBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": not a dataset directory");
  const std::string what = "meta.json";
  const Json meta = parse_json(read_text(dir / "meta.json"), what);
  DatasetBundle b;
  b.meta.format_version = number<int>(meta, "format_version", what);
  if (b.meta.format_version != kFormatVersion) {
    throw FormatError(what + ": unsupported format_version " +
                      std::to_string(b.meta.format_version));
  }
  b.meta.d = number<int>(meta, "d", what);
  if (meta.contains("r")) b.meta.r = number<int>(meta, "r", what);
  b.meta.t = number<int>(meta, "t", what);
  b.meta.m = number<int>(meta, "m", what);
  b.meta.sigma = number<double>(meta, "sigma", what);
  b.meta.seed = number<std::uint64_t>(meta, "seed", what);
  if (b.meta.d < 1 || b.meta.t < 1) throw FormatError(what + ": d and t must be positive");
  b.tasks = read_samples_csv(dir / "data.csv", b.meta.d, b.meta.t);
  if (fs::exists(dir / "truth.json")) {
    b.truth = truth_from_json(read_text(dir / "truth.json"));
    if (static_cast<int>(b.truth->dim()) != b.meta.d ||
        static_cast<int>(b.truth->tasks()) != b.meta.t) {
      throw FormatError("truth.json: dimensions disagree with meta.json");
    }
  }
  return b;
}

std::string model_to_json(const ModelFile& model) {
  const auto& s = model.state;
  Json j;
  j["version"] = kFormatVersion;
  j["d"] = s.u.rows();
  j["r"] = s.u.cols();
  j["t"] = s.w.rows();
  j["k"] = model.k;
  j["iteration"] = s.iteration;
  j["u"] = matrix_to_json(s.u);
  j["w"] = matrix_to_json(s.w);
  Json triplets = Json::array();
  for (Eigen::Index task = 0; task < s.b.cols(); ++task) {
    for (Eigen::Index idx = 0; idx < s.b.rows(); ++idx) {
      const double v = s.b(idx, task);
      if (v != 0.0) triplets.push_back(Json::array({task, idx, v}));
    }
  }
  j["b"] = std::move(triplets);
  if (model.ledger) {
    Json releases = Json::array();
    for (const auto& r : model.ledger->releases()) {
      releases.push_back({{"iteration", r.iteration}, {"rho", r.rho}});
    }
    Json ledger;
    ledger["planned"] = model.ledger->planned();
    ledger["releases"] = std::move(releases);
    if (model.ledger_delta) ledger["delta"] = *model.ledger_delta;
    j["ledger"] = std::move(ledger);
  }
  return j.dump(1) + "\n";
}

ModelFile model_from_json(const std::string& text) {
  const std::string what = "model.json";
  const Json j = parse_json(text, what);
  const int version = number<int>(j, "version", what);
  if (version != kFormatVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const int d = number<int>(j, "d", what);
  const int r = number<int>(j, "r", what);
  const int t = number<int>(j, "t", what);
  if (d < 1 || r < 1 || t < 1) throw FormatError(what + ": d, r, t must be positive");
  ModelFile out;
  out.k = number<int>(j, "k", what);
  out.state.iteration = number<std::size_t>(j, "iteration", what);
  out.state.u = matrix_from_json(field(j, "u", what), what + ": u", d, r);
  out.state.w = matrix_from_json(field(j, "w", what), what + ": w", t, r);
  out.state.b = Matrix::Zero(d, t);
  const Json& b = field(j, "b", what);
  if (!b.is_array()) throw FormatError(what + ": b must be an array of [task, index, value]");
  for (std::size_t n = 0; n < b.size(); ++n) {
    const Json& e = b[n];
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
        !e[1].is_number_integer() || !e[2].is_number()) {
      throw FormatError(what + ": b entry " + std::to_string(n) +
                        " must be [task, index, value]");
    }
    const auto task = e[0].get<long>();
    const auto idx = e[1].get<long>();
    if (task < 0 || task >= t || idx < 0 || idx >= d) {
      throw FormatError(what + ": b entry " + std::to_string(n) + " is out of range");
    }
    out.state.b(idx, task) = e[2].get<double>();
  }
  if (j.contains("ledger")) {
    const Json& l = j["ledger"];
    PrivacyLedger ledger(number<int>(l, "planned", what + ": ledger"));
    const Json& rel = field(l, "releases", what + ": ledger");
    if (!rel.is_array()) throw FormatError(what + ": ledger releases must be an array");
    for (const Json& r : rel) {
      ledger.record(number<int>(r, "iteration", what + ": ledger release"),
                    number<double>(r, "rho", what + ": ledger release"));
    }
    out.ledger = std::move(ledger);
    if (l.contains("delta")) out.ledger_delta = number<double>(l, "delta", what + ": ledger");
  }
  return out;
}

void write_model(const fs::path& path, const ModelFile& model) {
  write_text(path, model_to_json(model));
}

ModelFile read_model(const fs::path& path) { return model_from_json(read_text(path)); }

std::string metrics_csv(const FitReport& report) {
  std::string out = "iteration,train_mse,subspace_dist,max_nnz,delta,wall_time_s\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.iteration) + "," + g17(r.train_mse) + "," + g17(r.subspace_dist) +
           "," + std::to_string(r.max_nonzeros) + "," + g17(r.delta) + "," +
           g17(r.wall_seconds) + "\n";
  }
  return out;
}

void write_metrics(const fs::path& path, const FitReport& report) {
  write_text(path, metrics_csv(report));
}

std::string ledger_to_json(const PrivacyLedger& ledger, double delta) {
  Json j;
  j["planned"] = ledger.planned();
  j["delta"] = delta;
  Json releases = Json::array();
  double rho = 0.0;
  for (const auto& r : ledger.releases()) {
    rho += r.rho;
    releases.push_back({{"iteration", r.iteration},
                        {"rho", r.rho},
                        {"rho_total", rho},
                        {"epsilon", zcdp_epsilon(rho, delta)}});
  }
  j["releases"] = std::move(releases);
  j["rho_total"] = ledger.rho_total();
  j["epsilon"] = ledger.epsilon_at(delta);
  return j.dump(2) + "\n";
}

void write_ledger(const fs::path& path, const PrivacyLedger& ledger, double delta) {
  write_text(path, ledger_to_json(ledger, delta));
}

} // namespace lrs

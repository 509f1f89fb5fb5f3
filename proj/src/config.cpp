#include "lrs/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "json.hpp"
#include "lrs/errors.hpp"
#include "lrs/io.hpp"

namespace lrs {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Position {
  std::size_t line = 0;
  std::size_t column = 0;
};

Position position_of(const std::string& text, std::size_t offset) {
  Position p{1, 1};
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

// Best-effort location of "key" inside "section" for error messages.
std::optional<Position> locate(const std::string& text, const std::string& section,
                               const std::string& key) {
  std::size_t from = 0;
  if (!section.empty()) {
    from = text.find('"' + section + '"');
    if (from == std::string::npos) return std::nullopt;
  }
  const auto at = text.find('"' + key + '"', from);
  if (at == std::string::npos) return std::nullopt;
  return position_of(text, at);
}

class Reader {
public:
  Reader(const std::string& text, std::string name) : text_(text), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& msg) const {
    std::string where = name_;
    if (auto p = locate(text_, section, key)) {
      where += ":" + std::to_string(p->line) + ":" + std::to_string(p->column);
    }
    const std::string path = section.empty() ? key : section + "." + key;
    throw ConfigError(where + ": " + path + ": " + msg);
  }

  double real(const Json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_number()) fail(sec, key, "expected a number");
    return v.get<double>();
  }

  long long integer(const Json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_number_integer()) fail(sec, key, "expected an integer");
    return v.get<long long>();
  }

  int int32(const Json& v, const std::string& sec, const std::string& key) const {
    const auto x = integer(v, sec, key);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      fail(sec, key, "integer out of range");
    }
    return static_cast<int>(x);
  }

  std::uint64_t uint64(const Json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(sec, key, "expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const Json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_boolean()) fail(sec, key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const Json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_string()) fail(sec, key, "expected a string");
    return v.get<std::string>();
  }

  using Setter = std::function<void(const Json&)>;

  void section(const Json& obj, const std::string& sec,
               const std::map<std::string, Setter>& setters) const {
    if (!obj.is_object()) fail("", sec, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      auto it = setters.find(key);
      if (it == setters.end()) {
        std::string known;
        for (const auto& [k, _] : setters) known += (known.empty() ? "" : ", ") + k;
        fail(sec, key, "unknown key (known: " + known + ")");
      }
      it->second(value);
    }
  }

private:
  const std::string& text_;
  std::string name_;
};

std::string to_string(SupportMode m) { return m == SupportMode::exact ? "exact" : "capped"; }
std::string to_string(WeightMode m) { return m == WeightMode::gaussian ? "gaussian" : "ones"; }
std::string to_string(Batching b) { return b == Batching::reuse ? "reuse" : "split"; }
std::string to_string(SweepMode m) {
  switch (m) {
    case SweepMode::fit: return "fit";
    case SweepMode::fit_dp: return "fit-dp";
    case SweepMode::fit_rank1: return "fit-rank1";
  }
  return "fit";
}

} // namespace

void ExperimentConfig::validate() const {
  gen.validate();
  solver.validate();
  privacy.validate();
  rank1.validate();
  if (seeds.empty()) throw ConfigError("config: invariant seeds non-empty violated");
  if (adapt.k < 0) throw ConfigError("config: invariant adapt.k >= 0 violated");
  if (sigma_dp_given && privacy.sigma_dp <= 0.0) {
    throw ConfigError("config: invariant privacy.sigma_dp > 0 violated");
  }
  if (sweep) {
    static const char* params[] = {"epsilon", "k", "sparsity", "sigma", "m", "t", "r"};
    bool known = false;
    for (const char* p : params) known = known || sweep->param == p;
    if (!known) throw ConfigError("config: unknown sweep parameter '" + sweep->param + "'");
    if (sweep->values.empty()) throw ConfigError("config: invariant sweep.values non-empty violated");
    if (sweep->test_m < 1) throw ConfigError("config: invariant sweep.test_m >= 1 violated");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& name) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto p = position_of(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    const auto colon = msg.find("syntax error");
    if (colon != std::string::npos) msg = msg.substr(colon);
    throw ConfigError(name + ":" + std::to_string(p.line) + ":" + std::to_string(p.column) +
                      ": " + msg);
  }
  const Reader rd(text, name);
  ExperimentConfig cfg;
  auto& g = cfg.gen;
  auto& s = cfg.solver;
  auto& p = cfg.privacy;
  auto& r1 = cfg.rank1;
  auto& a = cfg.adapt;
  bool planned_given = false;

  const std::map<std::string, Reader::Setter> gen_keys{
      {"d", [&](const Json& v) { g.d = rd.int32(v, "gen", "d"); }},
      {"r", [&](const Json& v) { g.r = rd.int32(v, "gen", "r"); }},
      {"t", [&](const Json& v) { g.t = rd.int32(v, "gen", "t"); }},
      {"m", [&](const Json& v) { g.m = rd.int32(v, "gen", "m"); }},
      {"k", [&](const Json& v) { g.k = rd.int32(v, "gen", "k"); }},
      {"zeta", [&](const Json& v) { g.zeta = rd.int32(v, "gen", "zeta"); }},
      {"sigma", [&](const Json& v) { g.sigma = rd.real(v, "gen", "sigma"); }},
      {"seed", [&](const Json& v) { g.seed = rd.uint64(v, "gen", "seed"); }},
      {"w_scale", [&](const Json& v) { g.w_scale = rd.real(v, "gen", "w_scale"); }},
      {"support",
       [&](const Json& v) {
         const auto x = rd.string(v, "gen", "support");
         if (x == "exact") g.support = SupportMode::exact;
         else if (x == "capped") g.support = SupportMode::capped;
         else rd.fail("gen", "support", "expected \"exact\" or \"capped\"");
       }},
      {"weights",
       [&](const Json& v) {
         const auto x = rd.string(v, "gen", "weights");
         if (x == "gaussian") g.weights = WeightMode::gaussian;
         else if (x == "ones") g.weights = WeightMode::ones;
         else rd.fail("gen", "weights", "expected \"gaussian\" or \"ones\"");
       }},
  };
  const std::map<std::string, Reader::Setter> solver_keys{
      {"r", [&](const Json& v) { s.r = rd.int32(v, "solver", "r"); }},
      {"k", [&](const Json& v) { s.k = rd.int32(v, "solver", "k"); }},
      {"outer_iters", [&](const Json& v) { s.outer_iters = rd.int32(v, "solver", "outer_iters"); }},
      {"eps", [&](const Json& v) { s.eps = rd.real(v, "solver", "eps"); }},
      {"c1", [&](const Json& v) { s.c1 = rd.real(v, "solver", "c1"); }},
      {"c3", [&](const Json& v) { s.c3 = rd.real(v, "solver", "c3"); }},
      {"c4", [&](const Json& v) { s.c4 = rd.real(v, "solver", "c4"); }},
      {"c5", [&](const Json& v) { s.c5 = rd.real(v, "solver", "c5"); }},
      {"inner_cap", [&](const Json& v) { s.inner_cap = rd.int32(v, "solver", "inner_cap"); }},
      {"init_bound", [&](const Json& v) { s.init_bound = rd.real(v, "solver", "init_bound"); }},
      {"gamma0", [&](const Json& v) { s.gamma0 = rd.real(v, "solver", "gamma0"); }},
      {"batching",
       [&](const Json& v) {
         const auto x = rd.string(v, "solver", "batching");
         if (x == "reuse") s.batching = Batching::reuse;
         else if (x == "split") s.batching = Batching::split;
         else rd.fail("solver", "batching", "expected \"reuse\" or \"split\"");
       }},
      {"ridge_eps", [&](const Json& v) { s.ridge_eps = rd.real(v, "solver", "ridge_eps"); }},
      {"stop_tol", [&](const Json& v) { s.stop_tol = rd.real(v, "solver", "stop_tol"); }},
  };
  const std::map<std::string, Reader::Setter> privacy_keys{
      {"epsilon", [&](const Json& v) { p.epsilon = rd.real(v, "privacy", "epsilon"); }},
      {"delta", [&](const Json& v) { p.delta = rd.real(v, "privacy", "delta"); }},
      {"sigma_dp",
       [&](const Json& v) {
         p.sigma_dp = rd.real(v, "privacy", "sigma_dp");
         cfg.sigma_dp_given = true;
       }},
      {"clip",
       [&](const Json& v) {
         if (!v.is_object()) rd.fail("privacy", "clip", "expected an object with a1, a2, a3, aw");
         const std::map<std::string, Reader::Setter> clip_keys{
             {"a1", [&](const Json& x) { p.a1 = rd.real(x, "clip", "a1"); }},
             {"a2", [&](const Json& x) { p.a2 = rd.real(x, "clip", "a2"); }},
             {"a3", [&](const Json& x) { p.a3 = rd.real(x, "clip", "a3"); }},
             {"aw", [&](const Json& x) { p.aw = rd.real(x, "clip", "aw"); }},
         };
         for (const char* k : {"a1", "a2", "a3", "aw"}) {
           if (!v.contains(k)) rd.fail("privacy", "clip", std::string("missing level ") + k);
         }
         rd.section(v, "clip", clip_keys);
         cfg.clips_given = true;
       }},
      {"planned_iters",
       [&](const Json& v) {
         p.planned_iters = rd.int32(v, "privacy", "planned_iters");
         planned_given = true;
       }},
  };
  const std::map<std::string, Reader::Setter> rank1_keys{
      {"k", [&](const Json& v) { r1.k = rd.int32(v, "rank1", "k"); }},
      {"iters", [&](const Json& v) { r1.iters = rd.int32(v, "rank1", "iters"); }},
      {"c1", [&](const Json& v) { r1.c1 = rd.real(v, "rank1", "c1"); }},
      {"c2", [&](const Json& v) { r1.c2 = rd.real(v, "rank1", "c2"); }},
      {"c3", [&](const Json& v) { r1.c3 = rd.real(v, "rank1", "c3"); }},
      {"gamma0", [&](const Json& v) { r1.gamma0 = rd.real(v, "rank1", "gamma0"); }},
      {"tau0", [&](const Json& v) { r1.tau0 = rd.real(v, "rank1", "tau0"); }},
      {"beta0", [&](const Json& v) { r1.beta0 = rd.real(v, "rank1", "beta0"); }},
  };
  const std::map<std::string, Reader::Setter> adapt_keys{
      {"k", [&](const Json& v) { a.k = rd.int32(v, "adapt", "k"); }},
      {"iters", [&](const Json& v) { a.iters = rd.int32(v, "adapt", "iters"); }},
      {"c1", [&](const Json& v) { a.c1 = rd.real(v, "adapt", "c1"); }},
      {"c_prime", [&](const Json& v) { a.c_prime = rd.real(v, "adapt", "c_prime"); }},
      {"c_dprime", [&](const Json& v) { a.c_dprime = rd.real(v, "adapt", "c_dprime"); }},
      {"c3", [&](const Json& v) { a.c3 = rd.real(v, "adapt", "c3"); }},
      {"c4", [&](const Json& v) { a.c4 = rd.real(v, "adapt", "c4"); }},
      {"noise_floor", [&](const Json& v) { a.noise_floor = rd.real(v, "adapt", "noise_floor"); }},
      {"rho", [&](const Json& v) { a.rho = rd.real(v, "adapt", "rho"); }},
      {"eps", [&](const Json& v) { a.eps = rd.real(v, "adapt", "eps"); }},
      {"inner_cap", [&](const Json& v) { a.inner_cap = rd.int32(v, "adapt", "inner_cap"); }},
      {"ridge", [&](const Json& v) { a.ridge = rd.real(v, "adapt", "ridge"); }},
  };

  SweepSpec sweep;
  const std::map<std::string, Reader::Setter> sweep_keys{
      {"param", [&](const Json& v) { sweep.param = rd.string(v, "sweep", "param"); }},
      {"values",
       [&](const Json& v) {
         if (!v.is_array()) rd.fail("sweep", "values", "expected an array of numbers");
         for (const Json& x : v) sweep.values.push_back(rd.real(x, "sweep", "values"));
       }},
      {"mode",
       [&](const Json& v) {
         const auto x = rd.string(v, "sweep", "mode");
         if (x == "fit") sweep.mode = SweepMode::fit;
         else if (x == "fit-dp") sweep.mode = SweepMode::fit_dp;
         else if (x == "fit-rank1") sweep.mode = SweepMode::fit_rank1;
         else rd.fail("sweep", "mode", "expected \"fit\", \"fit-dp\" or \"fit-rank1\"");
       }},
      {"test_m", [&](const Json& v) { sweep.test_m = rd.int32(v, "sweep", "test_m"); }},
  };

  const std::map<std::string, Reader::Setter> top{
      {"name", [&](const Json& v) { cfg.name = rd.string(v, "", "name"); }},
      {"output_dir", [&](const Json& v) { cfg.output_dir = rd.string(v, "", "output_dir"); }},
      {"seeds",
       [&](const Json& v) {
         if (!v.is_array()) rd.fail("", "seeds", "expected an array of integers");
         cfg.seeds.clear();
         for (const Json& x : v) cfg.seeds.push_back(rd.uint64(x, "", "seeds"));
       }},
      {"baselines", [&](const Json& v) { cfg.baselines = rd.boolean(v, "", "baselines"); }},
      {"gen", [&](const Json& v) { rd.section(v, "gen", gen_keys); }},
      {"solver", [&](const Json& v) { rd.section(v, "solver", solver_keys); }},
      {"privacy", [&](const Json& v) { rd.section(v, "privacy", privacy_keys); }},
      {"rank1", [&](const Json& v) { rd.section(v, "rank1", rank1_keys); }},
      {"adapt", [&](const Json& v) { rd.section(v, "adapt", adapt_keys); }},
      {"sweep",
       [&](const Json& v) {
         rd.section(v, "sweep", sweep_keys);
         if (sweep.param.empty()) rd.fail("", "sweep", "missing 'param'");
         cfg.sweep = sweep;
       }},
  };
  if (!doc.is_object()) throw ConfigError(name + ":1:1: top level must be a JSON object");
  rd.section(doc, "", top);

  if (!planned_given) p.planned_iters = s.outer_iters;
  if (!cfg.sigma_dp_given && p.epsilon > 0.0 && p.delta > 0.0 && p.delta < 1.0) {
    p.sigma_dp = calibrate_noise(p.epsilon, p.delta);
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(name + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.filename().string());
}

std::string config_to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["output_dir"] = c.output_dir.string();
  j["seeds"] = c.seeds;
  j["baselines"] = c.baselines;
  const auto& g = c.gen;
  j["gen"] = {{"d", g.d},         {"r", g.r},
              {"t", g.t},         {"m", g.m},
              {"k", g.k},         {"zeta", g.zeta},
              {"sigma", g.sigma}, {"seed", g.seed},
              {"w_scale", g.w_scale}, {"support", to_string(g.support)},
              {"weights", to_string(g.weights)}};
  const auto& s = c.solver;
  j["solver"] = {{"r", s.r},
                 {"k", s.k},
                 {"outer_iters", s.outer_iters},
                 {"eps", s.eps},
                 {"c1", s.c1},
                 {"c3", s.c3},
                 {"c4", s.c4},
                 {"c5", s.c5},
                 {"inner_cap", s.inner_cap},
                 {"init_bound", s.init_bound},
                 {"gamma0", s.gamma0},
                 {"batching", to_string(s.batching)},
                 {"ridge_eps", s.ridge_eps},
                 {"stop_tol", s.stop_tol}};
  const auto& p = c.privacy;
  Json priv = {{"epsilon", p.epsilon}, {"delta", p.delta}, {"planned_iters", p.planned_iters}};
  if (c.sigma_dp_given) priv["sigma_dp"] = p.sigma_dp;
  if (c.clips_given) priv["clip"] = {{"a1", p.a1}, {"a2", p.a2}, {"a3", p.a3}, {"aw", p.aw}};
  j["privacy"] = std::move(priv);
  const auto& r = c.rank1;
  j["rank1"] = {{"k", r.k},   {"iters", r.iters},   {"c1", r.c1},     {"c2", r.c2},
                {"c3", r.c3}, {"gamma0", r.gamma0}, {"tau0", r.tau0}, {"beta0", r.beta0}};
  const auto& a = c.adapt;
  j["adapt"] = {{"k", a.k},
                {"iters", a.iters},
                {"c1", a.c1},
                {"c_prime", a.c_prime},
                {"c_dprime", a.c_dprime},
                {"c3", a.c3},
                {"c4", a.c4},
                {"noise_floor", a.noise_floor},
                {"rho", a.rho},
                {"eps", a.eps},
                {"inner_cap", a.inner_cap},
                {"ridge", a.ridge}};
  if (c.sweep) {
    j["sweep"] = {{"param", c.sweep->param},
                  {"values", c.sweep->values},
                  {"mode", to_string(c.sweep->mode)},
                  {"test_m", c.sweep->test_m}};
  }
  return j.dump(2) + "\n";
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("output_dir '" + dir.string() + "' cannot be created");
  }
  const auto probe = dir / ".lrs_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("output_dir '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

} // namespace lrs

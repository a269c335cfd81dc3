#include "sfs/cli/config.hpp"

#include "sfs/rng.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace sfs::cli {

ConfigError::ConfigError(const std::string& message, int line)
    : UsageError(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

[[noreturn]] void fail(const YAML::Node& node, const std::string& message) { throw ConfigError(message, line_of(node)); }

// A mapping block with a fixed key set.
class Block {
 public:
  Block(const YAML::Node& node, std::string name, std::initializer_list<const char*> keys)
      : node_(node), name_(std::move(name)), keys_(keys.begin(), keys.end()) {
    if (!node_.IsMap()) fail(node_, "'" + name_ + "' must be a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!keys_.count(key)) fail(kv.first, "unknown key '" + key + "' in block '" + name_ + "'");
    }
  }

  bool has(const char* key) const { return static_cast<bool>(node_[key]); }
  YAML::Node operator[](const char* key) const { return node_[key]; }

  template <typename T>
  T get(const char* key, T fallback) const {
    const YAML::Node v = node_[key];
    if (!v) return fallback;
    return scalar<T>(v, key);
  }

  template <typename T>
  T require(const char* key) const {
    const YAML::Node v = node_[key];
    if (!v) fail(node_, "missing key '" + std::string(key) + "' in block '" + name_ + "'");
    return scalar<T>(v, key);
  }

  // A scalar or a sequence of scalars.
  template <typename T>
  std::vector<T> list(const char* key, std::vector<T> fallback) const {
    const YAML::Node v = node_[key];
    if (!v) return fallback;
    std::vector<T> out;
    if (v.IsSequence()) {
      for (const auto& e : v) out.push_back(scalar<T>(e, key));
    } else {
      out.push_back(scalar<T>(v, key));
    }
    return out;
  }

  const YAML::Node& node() const { return node_; }

  template <typename T>
  T scalar(const YAML::Node& v, const char* key) const {
    if (!v.IsScalar()) fail(v, "'" + name_ + "." + key + "' must be a scalar");
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "'" + name_ + "." + key + "' has an invalid value '" + v.Scalar() + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string name_;
  std::set<std::string> keys_;
};

Vector vector_of(const Block& b, const YAML::Node& v, const char* key) {
  std::vector<double> xs;
  if (v.IsSequence()) {
    for (const auto& e : v) xs.push_back(b.scalar<double>(e, key));
  } else {
    xs.push_back(b.scalar<double>(v, key));
  }
  return Eigen::Map<Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

DriftMode parse_mode(const YAML::Node& v) {
  const auto s = v.as<std::string>();
  if (s == "gradient_ratio") return DriftMode::gradient_ratio;
  if (s == "stein") return DriftMode::stein;
  if (s == "exact_gaussian" || s == "exact") return DriftMode::exact_gaussian;
  if (s == "quadrature") return DriftMode::quadrature;
  fail(v, "unknown drift mode '" + s + "'");
}

const char* mode_name(DriftMode m) {
  switch (m) {
    case DriftMode::gradient_ratio: return "gradient_ratio";
    case DriftMode::stein: return "stein";
    case DriftMode::exact_gaussian: return "exact_gaussian";
    case DriftMode::quadrature: return "quadrature";
  }
  return "";
}

void parse_target(const YAML::Node& node, ExperimentConfig& cfg) {
  Block b(node, "target",
          {"name", "dim", "mean", "variance", "components", "centers", "bandwidth", "epsilon", "log_offset"});
  TargetBlock& t = cfg.target;
  t.name = b.require<std::string>("name");
  t.dim = b.get("dim", 1);
  if (b.has("mean")) t.mean = vector_of(b, b["mean"], "mean");
  t.variance = b.get("variance", cfg.grid.horizon);
  if (b.has("components")) {
    const YAML::Node cs = b["components"];
    if (!cs.IsSequence()) fail(cs, "'target.components' must be a list");
    for (const auto& c : cs) {
      Block cb(c, "target.components", {"weight", "mean"});
      if (!cb.has("mean")) fail(c, "missing key 'mean' in block 'target.components'");
      t.components.push_back({cb.require<double>("weight"), vector_of(cb, cb["mean"], "mean")});
    }
  }
  t.centers = b.list<double>("centers", {});
  t.bandwidth = b.get("bandwidth", 1.0);
  t.epsilon = b.list<double>("epsilon", {0.0});
  if (t.epsilon.empty()) fail(b.node(), "'target.epsilon' list is empty");
  for (double e : t.epsilon)
    if (!(e >= 0.0 && e < 1.0)) fail(b["epsilon"], "'target.epsilon' values must lie in [0, 1)");
  t.log_offset = b.get("log_offset", 0.0);

  static const std::set<std::string> names{"gaussian", "standard", "mixture", "triangular_kde"};
  if (!names.count(t.name)) fail(b["name"], "unknown target '" + t.name + "'");
  if (t.name == "gaussian" && t.mean.size() == 0) t.mean = Vector::Zero(t.dim);
  if (t.name == "mixture" && t.components.empty()) fail(b.node(), "mixture target needs 'components'");
  if (t.name == "triangular_kde" && t.centers.empty()) fail(b.node(), "triangular_kde target needs 'centers'");
}

void parse_drift(const YAML::Node& node, ExperimentConfig& cfg) {
  Block b(node, "drift", {"mode", "M", "clamp", "terminal_policy", "quadrature_order"});
  DriftConfig& d = cfg.drift;
  if (b.has("mode")) d.mode = parse_mode(b["mode"]);
  d.mc_batch = b.get("M", d.mc_batch);
  if (b.has("clamp")) {
    cfg.clamp_set = true;
    const YAML::Node c = b["clamp"];
    if (c.IsNull() || (c.IsScalar() && c.Scalar() == "none"))
      d.clamp.reset();
    else
      d.clamp = b.scalar<double>(c, "clamp");
  }
  if (b.has("terminal_policy")) {
    const YAML::Node p = b["terminal_policy"];
    const auto s = p.as<std::string>();
    if (s == "analytic_limit")
      d.terminal_policy = TerminalPolicy::analytic_limit;
    else if (s == "last_interior")
      d.terminal_policy = TerminalPolicy::last_interior;
    else
      fail(p, "unknown terminal_policy '" + s + "'");
  }
  d.quadrature_order = b.get("quadrature_order", d.quadrature_order);
}

ExperimentConfig parse_root(const YAML::Node& root) {
  Block top(root, "config", {"target", "grid", "drift", "run", "metrics", "oracle", "probe"});
  ExperimentConfig cfg;

  if (top.has("grid")) {
    Block g(top["grid"], "grid", {"T", "n"});
    cfg.grid.horizon = g.get("T", 1.0);
    cfg.grid.n = g.list<int>("n", {16});
    if (cfg.grid.n.empty()) fail(g["n"], "'grid.n' list is empty");
    for (int n : cfg.grid.n)
      if (n < 1) fail(g["n"], "'grid.n' values must be positive");
    if (!(cfg.grid.horizon > 0.0)) fail(g["T"], "'grid.T' must be positive");
  }
  if (!top.has("target")) fail(root, "missing block 'target'");
  parse_target(top["target"], cfg);
  if (top.has("drift")) parse_drift(top["drift"], cfg);

  if (top.has("run")) {
    Block r(top["run"], "run", {"K", "master_seed", "out", "format", "threads"});
    cfg.run.k = r.get<std::int64_t>("K", cfg.run.k);
    cfg.run.master_seed = r.get<std::uint64_t>("master_seed", 0);
    cfg.run.out = r.get<std::string>("out", cfg.run.out);
    cfg.run.format = r.get<std::string>("format", cfg.run.format);
    cfg.run.threads = r.get("threads", 0);
    if (cfg.run.format != "csv" && cfg.run.format != "bin" && cfg.run.format != "both")
      fail(r["format"], "'run.format' must be csv, bin or both");
    if (cfg.run.k < 1) fail(r["K"], "'run.K' must be positive");
  }
  if (top.has("metrics")) {
    Block m(top["metrics"], "metrics", {"reference_size", "bins", "directions", "bootstrap"});
    cfg.metrics.reference_size = m.get<std::int64_t>("reference_size", 0);
    cfg.metrics.bins = m.get("bins", cfg.metrics.bins);
    cfg.metrics.directions = m.get("directions", cfg.metrics.directions);
    cfg.metrics.bootstrap = m.get("bootstrap", cfg.metrics.bootstrap);
    if (cfg.metrics.reference_size < 0 || cfg.metrics.bins < 1 || cfg.metrics.directions < 1 ||
        cfg.metrics.bootstrap < 2)
      fail(m.node(), "metrics values out of range");
  }
  if (top.has("oracle")) {
    Block o(top["oracle"], "oracle",
            {"t_min", "t_max", "t_points", "y_min", "y_max", "y_points", "M", "seeds", "sd_gate", "kink_tolerance"});
    OracleBlock& ob = cfg.oracle;
    ob.t_min = o.get("t_min", ob.t_min);
    ob.t_max = o.get("t_max", ob.t_max);
    ob.t_points = o.get("t_points", ob.t_points);
    ob.y_min = o.get("y_min", ob.y_min);
    ob.y_max = o.get("y_max", ob.y_max);
    ob.y_points = o.get("y_points", ob.y_points);
    ob.m = o.get("M", ob.m);
    ob.seeds = o.get("seeds", ob.seeds);
    ob.sd_gate = o.get("sd_gate", ob.sd_gate);
    ob.kink_tolerance = o.get("kink_tolerance", ob.kink_tolerance);
    if (ob.t_points < 1 || ob.y_points < 1 || ob.m < 2 || ob.seeds < 1) fail(o.node(), "oracle values out of range");
    if (!(ob.t_min >= 0.0 && ob.t_min <= ob.t_max)) fail(o.node(), "oracle needs 0 <= t_min <= t_max");
  }
  if (top.has("probe")) {
    Block p(top["probe"], "probe", {"lower", "upper", "pairs"});
    cfg.probe.lower = p.get("lower", cfg.probe.lower);
    cfg.probe.upper = p.get("upper", cfg.probe.upper);
    cfg.probe.pairs = p.get<std::int64_t>("pairs", cfg.probe.pairs);
    if (!(cfg.probe.lower < cfg.probe.upper)) fail(p.node(), "'probe.lower' must be below 'probe.upper'");
  }
  try {
    validate(cfg.drift);
  } catch (const UsageError& e) {
    fail(top.has("drift") ? top["drift"] : root, e.what());
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping", line_of(root));
  if (root["config"] && root["version"]) return parse_root(root["config"]);
  return parse_root(root);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const ExperimentConfig& cfg) {
  using nlohmann::ordered_json;
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  ordered_json target;
  const TargetBlock& t = cfg.target;
  target["name"] = t.name;
  target["dim"] = t.dim;
  if (t.name == "gaussian") {
    target["mean"] = vec(t.mean);
    target["variance"] = t.variance;
  }
  if (t.name == "mixture") {
    ordered_json cs = ordered_json::array();
    for (const auto& c : t.components) cs.push_back({{"weight", c.weight}, {"mean", vec(c.mean)}});
    target["components"] = cs;
  }
  if (t.name == "triangular_kde") {
    target["centers"] = t.centers;
    target["bandwidth"] = t.bandwidth;
  }
  target["epsilon"] = t.epsilon;
  target["log_offset"] = t.log_offset;

  ordered_json drift;
  drift["mode"] = mode_name(cfg.drift.mode);
  drift["M"] = cfg.drift.mc_batch;
  if (cfg.clamp_set) drift["clamp"] = cfg.drift.clamp ? ordered_json(*cfg.drift.clamp) : ordered_json(nullptr);
  drift["terminal_policy"] =
      cfg.drift.terminal_policy == TerminalPolicy::analytic_limit ? "analytic_limit" : "last_interior";
  drift["quadrature_order"] = cfg.drift.quadrature_order;

  ordered_json j;
  j["target"] = target;
  j["grid"] = {{"T", cfg.grid.horizon}, {"n", cfg.grid.n}};
  j["drift"] = drift;
  j["run"] = {{"K", cfg.run.k},
              {"master_seed", cfg.run.master_seed},
              {"out", cfg.run.out},
              {"format", cfg.run.format},
              {"threads", cfg.run.threads}};
  j["metrics"] = {{"reference_size", cfg.metrics.reference_size},
                  {"bins", cfg.metrics.bins},
                  {"directions", cfg.metrics.directions},
                  {"bootstrap", cfg.metrics.bootstrap}};
  const OracleBlock& o = cfg.oracle;
  j["oracle"] = {{"t_min", o.t_min},       {"t_max", o.t_max},   {"t_points", o.t_points},
                 {"y_min", o.y_min},       {"y_max", o.y_max},   {"y_points", o.y_points},
                 {"M", o.m},               {"seeds", o.seeds},   {"sd_gate", o.sd_gate},
                 {"kink_tolerance", o.kink_tolerance}};
  j["probe"] = {{"lower", cfg.probe.lower}, {"upper", cfg.probe.upper}, {"pairs", cfg.probe.pairs}};
  return j.dump(2);
}

TargetSpec build_target(const ExperimentConfig& cfg) {
  const TargetBlock& t = cfg.target;
  const double T = cfg.grid.horizon;
  TargetSpec spec;
  if (t.name == "gaussian") {
    if (t.mean.size() != t.dim) throw ConfigError("'target.mean' must have 'dim' entries", 0);
    spec = make_gaussian_target(GaussianParams{t.mean, t.variance}, T);
  } else if (t.name == "standard") {
    spec = make_standard_target(t.dim, T);
  } else if (t.name == "mixture") {
    for (const auto& c : t.components)
      if (c.mean.size() != t.dim) throw ConfigError("mixture component means must have 'dim' entries", 0);
    spec = make_gaussian_mixture_target(t.components, T);
  } else {
    if (t.dim != 1) throw ConfigError("triangular_kde is one-dimensional", 0);
    spec = make_triangular_kde_target(TriangularKdeParams{t.centers, t.bandwidth}, T);
  }
  if (t.log_offset != 0.0) spec = with_log_offset(std::move(spec), t.log_offset);
  return spec;
}

RunConfig build_run_config(const ExperimentConfig& cfg, const TargetSpec& target, int n, double epsilon) {
  RunConfig rc;
  rc.grid = TimeGrid{n, cfg.grid.horizon};
  rc.ensemble_size = cfg.run.k;
  rc.master_seed = cfg.run.master_seed;
  rc.drift = cfg.drift;
  rc.drift.epsilon = epsilon;
  if (!cfg.clamp_set) rc.drift.clamp = default_clamp(target, epsilon);
  rc.threads = cfg.run.threads;
  return rc;
}

MetricsOptions build_metrics_options(const ExperimentConfig& cfg) {
  MetricsOptions m;
  m.bins = cfg.metrics.bins;
  m.directions = cfg.metrics.directions;
  m.bootstrap = cfg.metrics.bootstrap;
  m.seed = derive_seed(cfg.run.master_seed, {static_cast<std::uint64_t>(Stream::bootstrap)});
  return m;
}

}  // namespace sfs::cli

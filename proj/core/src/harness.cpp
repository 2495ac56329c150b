#include "ustlab/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"
#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/parallel.hpp"

#ifndef USTLAB_VERSION
#define USTLAB_VERSION "0.0.0"
#endif

namespace ustlab {

using nlohmann::json;
namespace fs = std::filesystem;

const char* code_version() noexcept { return USTLAB_VERSION; }

namespace {

constexpr const char* kKindNames[] = {"lerw-growth", "volume",  "ondiag",  "offdiag", "displacement", "tails",
                                      "collapse",    "events",  "harnack", "packing", "fluctuation"};

}  // namespace

const char* to_string(ExperimentKind k) noexcept { return kKindNames[static_cast<int>(k)]; }

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (int i = 0; i < static_cast<int>(std::size(kKindNames)); ++i) {
    if (text == kKindNames[i]) return static_cast<ExperimentKind>(i);
  }
  throw ValidationError("unknown experiment kind '" + text + "'");
}

void validate(const ExperimentSpec& s) {
  if (s.schema_version != ExperimentSpec::kSchemaVersion) {
    throw ValidationError("unsupported spec schema_version " + std::to_string(s.schema_version));
  }
  if (s.replicates < 1) throw ValidationError("replicates must be >= 1");
  if (s.L < 1) throw ValidationError("L must be >= 1");
  if (s.Lambda < 1) throw ValidationError("Lambda must be >= 1");
  if (!(s.max_failure_fraction >= 0.0 && s.max_failure_fraction <= 1.0)) {
    throw ValidationError("max_failure_fraction must lie in [0, 1]");
  }
  if (s.fit_window && !(s.fit_window->lo < s.fit_window->hi)) throw ValidationError("fit_window must have lo < hi");
  const auto need = [](bool nonempty, const char* what) {
    if (!nonempty) throw ValidationError(std::string(what) + " must be nonempty");
  };
  switch (s.kind) {
    case ExperimentKind::lerw_growth:
      need(s.n_grid.size() >= 4, "n_grid (>= 4 points)");
      for (const int n : s.n_grid) {
        if (n < 1) throw ValidationError("n_grid entries must be >= 1");
      }
      break;
    case ExperimentKind::volume:
    case ExperimentKind::fluctuation:
      need(!s.r_grid.empty(), "r_grid");
      break;
    case ExperimentKind::ondiag:
    case ExperimentKind::displacement:
      need(!s.time_grid.empty(), "time_grid");
      if (s.kind == ExperimentKind::displacement && (s.trajectories < 1 || s.trajectories > 0xFFFE)) {
        throw ValidationError("trajectories must be in [1, 65534]");
      }
      break;
    case ExperimentKind::offdiag:
      need(!s.time_grid.empty(), "time_grid");
      need(!s.x_grid.empty(), "x_grid");
      break;
    case ExperimentKind::tails:
      need(!s.targets.empty(), "targets");
      need(!s.lambda_grid.empty(), "lambda_grid");
      if (s.targets.size() > 0xFFFF) throw ValidationError("too many targets");
      for (const Site& t : s.targets) {
        if (t == Site{0, 0}) throw ValidationError("tail targets must differ from the origin");
        if (dist_inf(t, Site{0, 0}) > s.L) throw ValidationError("tail targets must lie in B_inf(0, L)");
      }
      break;
    case ExperimentKind::collapse:
      need(s.n_grid.size() >= 2, "n_grid (>= 2 points)");
      need(!s.t_grid.empty(), "t_grid");
      break;
    case ExperimentKind::events:
      if (s.shape != "straight" && s.shape != "spiral" && s.shape != "s" && s.shape != "grid") {
        throw ValidationError("shape must be one of straight, spiral, s, grid");
      }
      if (s.N < 1) throw ValidationError("N must be >= 1");
      if (!(s.lambda >= 2.0)) throw ValidationError("lambda must be >= 2");
      if (s.k < 1) throw ValidationError("k must be >= 1");
      check_scale(s.m, ScaleCheck{s.min_scale});
      break;
    case ExperimentKind::harnack:
      need(!s.R_grid.empty(), "R_grid");
      if (s.trials < 1) throw ValidationError("trials must be >= 1");
      break;
    case ExperimentKind::packing:
      need(!s.R_grid.empty(), "R_grid");
      if (!(s.delta > 0.0 && s.delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
      break;
  }
}

namespace {

json spec_document(const ExperimentSpec& s, bool for_hash) {
  json targets = json::array();
  for (const Site& t : s.targets) targets.push_back({t.x, t.y});
  json j = {
      {"schema_version", s.schema_version},
      {"kind", to_string(s.kind)},
      {"name", s.name},
      {"window", {{"L", s.L}, {"Lambda", s.Lambda}}},
      {"grids",
       {{"n", s.n_grid},
        {"r", s.r_grid},
        {"lambda", s.lambda_grid},
        {"t", s.t_grid},
        {"time", s.time_grid},
        {"x", s.x_grid},
        {"R", s.R_grid}}},
      {"targets", targets},
      {"replicates", s.replicates},
      {"master_seed", s.master_seed},
      {"bootstrap", s.bootstrap},
      {"max_failure_fraction", s.max_failure_fraction},
      {"params",
       {{"p", s.p},
        {"trajectories", s.trajectories},
        {"prune_mass", s.prune_mass},
        {"shape", s.shape},
        {"N", s.N},
        {"m", s.m},
        {"lambda", s.lambda},
        {"k", s.k},
        {"c1", s.c1},
        {"min_scale", s.min_scale},
        {"trials", s.trials},
        {"delta", s.delta},
        {"packing_R", s.packing_R}}},
  };
  if (s.fit_window) j["fit_window"] = {s.fit_window->lo, s.fit_window->hi};
  if (!for_hash) {
    j["workers"] = s.workers;
    j["output_dir"] = s.output_dir;
  }
  return j;
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("spec field '") + key + "': " + e.what());
    }
  }
}

ExperimentSpec spec_from_document(const json& j) {
  if (!j.is_object()) throw ValidationError("spec must be an object");
  ExperimentSpec s;
  take(j, "schema_version", s.schema_version);
  if (!j.contains("kind")) throw ValidationError("spec is missing 'kind'");
  s.kind = parse_experiment_kind(j.at("kind").get<std::string>());
  take(j, "name", s.name);
  if (j.contains("window")) {
    take(j["window"], "L", s.L);
    take(j["window"], "Lambda", s.Lambda);
  }
  if (j.contains("grids")) {
    const json& g = j["grids"];
    take(g, "n", s.n_grid);
    take(g, "r", s.r_grid);
    take(g, "lambda", s.lambda_grid);
    take(g, "t", s.t_grid);
    take(g, "time", s.time_grid);
    take(g, "x", s.x_grid);
    take(g, "R", s.R_grid);
  }
  if (j.contains("targets")) {
    for (const json& t : j["targets"]) {
      if (!t.is_array() || t.size() != 2) throw ValidationError("targets must be [x, y] pairs");
      s.targets.push_back({t[0].get<std::int32_t>(), t[1].get<std::int32_t>()});
    }
  }
  take(j, "replicates", s.replicates);
  if (j.contains("master_seed")) {
    const json& seed = j["master_seed"];
    if (seed.is_string()) {
      s.master_seed = std::stoull(seed.get<std::string>());
    } else {
      s.master_seed = seed.get<std::uint64_t>();
    }
  }
  take(j, "workers", s.workers);
  take(j, "output_dir", s.output_dir);
  take(j, "bootstrap", s.bootstrap);
  take(j, "max_failure_fraction", s.max_failure_fraction);
  if (j.contains("fit_window")) {
    const json& w = j["fit_window"];
    if (!w.is_array() || w.size() != 2) throw ValidationError("fit_window must be [lo, hi]");
    s.fit_window = FitWindow{w[0].get<double>(), w[1].get<double>()};
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    take(p, "p", s.p);
    take(p, "trajectories", s.trajectories);
    take(p, "prune_mass", s.prune_mass);
    take(p, "shape", s.shape);
    take(p, "N", s.N);
    take(p, "m", s.m);
    take(p, "lambda", s.lambda);
    take(p, "k", s.k);
    take(p, "c1", s.c1);
    take(p, "min_scale", s.min_scale);
    take(p, "trials", s.trials);
    take(p, "delta", s.delta);
    take(p, "packing_R", s.packing_R);
  }
  validate(s);
  return s;
}

// TOML <-> JSON conversion of the spec document. Integers beyond int64 are
// written as strings (only the seed can reach that range).
json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  throw ValidationError("unsupported TOML value in spec");
}

void json_to_toml(const json& j, toml::table& out);

toml::array json_array_to_toml(const json& j) {
  toml::array a;
  for (const json& v : j) {
    if (v.is_array()) {
      a.push_back(json_array_to_toml(v));
    } else if (v.is_number_unsigned()) {
      a.push_back(static_cast<std::int64_t>(v.get<std::uint64_t>()));
    } else if (v.is_number_integer()) {
      a.push_back(v.get<std::int64_t>());
    } else if (v.is_number_float()) {
      a.push_back(v.get<double>());
    } else if (v.is_string()) {
      a.push_back(v.get<std::string>());
    } else if (v.is_boolean()) {
      a.push_back(v.get<bool>());
    }
  }
  return a;
}

void json_to_toml(const json& j, toml::table& out) {
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      toml::table sub;
      json_to_toml(v, sub);
      out.insert(k, std::move(sub));
    } else if (v.is_array()) {
      out.insert(k, json_array_to_toml(v));
    } else if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) {
        out.insert(k, std::to_string(u));
      } else {
        out.insert(k, static_cast<std::int64_t>(u));
      }
    } else if (v.is_number_integer()) {
      out.insert(k, v.get<std::int64_t>());
    } else if (v.is_number_float()) {
      out.insert(k, v.get<double>());
    } else if (v.is_string()) {
      out.insert(k, v.get<std::string>());
    } else if (v.is_boolean()) {
      out.insert(k, v.get<bool>());
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
}

// JSON has no NaN or infinity; they are stored as null and "inf" / "-inf".
json encode_value(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_value(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw CorruptInputError("bad value '" + s + "' in replicate record");
  }
  return j.get<double>();
}

json encode_row(const std::vector<double>& row) {
  json a = json::array();
  for (const double v : row) a.push_back(encode_value(v));
  return a;
}

json fit_json(const LinearFit& f) {
  return {{"slope", encode_value(f.slope)},
          {"intercept", encode_value(f.intercept)},
          {"slope_stderr", encode_value(f.slope_stderr)},
          {"r2", encode_value(f.r2)},
          {"window", {encode_value(f.window.lo), encode_value(f.window.hi)}},
          {"n_points", f.n_points}};
}

json proportion_json(const ProportionEstimate& p) {
  return {{"successes", p.successes}, {"trials", p.trials}, {"p", p.p},
          {"lo", p.lo},               {"hi", p.hi},         {"one_sided", p.one_sided}};
}

}  // namespace

std::string to_json(const ExperimentSpec& spec) { return spec_document(spec, false).dump(2); }

std::string to_toml(const ExperimentSpec& spec) {
  toml::table t;
  json_to_toml(spec_document(spec, false), t);
  std::ostringstream ss;
  ss << t << '\n';
  return ss.str();
}

ExperimentSpec parse_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec is not valid JSON: ") + e.what());
  }
  return spec_from_document(j);
}

ExperimentSpec parse_spec_toml(const std::string& text) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ValidationError(std::string("spec is not valid TOML: ") + std::string(e.description()));
  }
  return spec_from_document(toml_to_json(t));
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open spec " + path.string());
  const std::string text = read_file(path);
  return path.extension() == ".json" ? parse_spec_json(text) : parse_spec_toml(text);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string spec_hash(const ExperimentSpec& spec) { return sha256_hex(spec_document(spec, true).dump()); }

namespace {

ScalePath event_path(const ExperimentSpec& s) {
  const ScaleCheck check{s.min_scale};
  if (s.shape == "straight") return build_straight_path(Site{s.N * s.m, 0}, s.m, check);
  if (s.shape == "spiral") return build_spiral_path(s.N, s.m, check);
  return build_s_path(s.N, s.m, check);
}

// overall, pre-screen stage (NaN if none), d_U(0, x) (NaN unless all stages ran), sandwich holds.
std::vector<double> event_replicate(const ExperimentSpec& s, const RngStream& rng) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (s.shape == "grid") {
    const GridPaths g = build_grid_event_paths(s.N, s.m, ScaleCheck{s.min_scale});
    const Window w = grid_window(g);
    const StagedRun run = sample_ust_staged(w, grid_starts(g, s.k), g.horizontal.vertices.front(), rng, false);
    const EventReport r = detect_grid(run, w, g, s.lambda, s.k);
    return {r.overall ? 1.0 : 0.0, nan, nan, r.sandwich_holds ? 1.0 : 0.0};
  }
  const ScalePath p = event_path(s);
  const Window w = event_window(p);
  if (s.shape == "s") {
    const std::vector<Site> starts(p.vertices.begin() + 1, p.vertices.end());
    const StagedRun run = sample_ust_staged(w, starts, p.vertices.front(), rng, false);
    const EventReport r = detect_H(run, w, p, s.lambda, s.c1);
    return {r.overall ? 1.0 : 0.0, nan, r.distance ? static_cast<double>(*r.distance) : nan, 1.0};
  }
  const LazyFmResult r = evaluate_Fm_lazy(w, p, s.lambda, s.k, rng);
  if (r.precheck_failed_at) return {0.0, static_cast<double>(*r.precheck_failed_at), nan, 1.0};
  return {r.report.overall ? 1.0 : 0.0, nan, static_cast<double>(*r.report.distance),
          r.report.sandwich_holds ? 1.0 : 0.0};
}

std::vector<std::size_t> collapse_sizes(const ExperimentSpec& s) { return {s.n_grid.begin(), s.n_grid.end()}; }

std::vector<std::pair<std::size_t, Site>> offdiag_track(const ExperimentSpec& s) {
  return offdiag_track_points(s.time_grid, s.x_grid);
}

}  // namespace

std::vector<double> run_replicate(const ExperimentSpec& s, std::size_t i) {
  const RngStream rng(s.master_seed, i);
  switch (s.kind) {
    case ExperimentKind::lerw_growth:
      return lerw_growth_replicate(s.n_grid, rng);
    case ExperimentKind::volume:
    case ExperimentKind::fluctuation:
      return volume_replicate(s.L, s.Lambda, s.r_grid, rng);
    case ExperimentKind::ondiag:
      return ondiag_replicate(s.L, s.Lambda, s.time_grid, s.prune_mass, rng);
    case ExperimentKind::collapse:
      return ondiag_replicate(s.L, s.Lambda, collapse_times(collapse_sizes(s), s.t_grid), s.prune_mass, rng);
    case ExperimentKind::offdiag:
      return offdiag_replicate(s.L, s.Lambda, offdiag_track(s), s.prune_mass, rng);
    case ExperimentKind::displacement:
      return displacement_replicate(s.L, s.Lambda, s.time_grid, s.trajectories, s.p, rng);
    case ExperimentKind::tails:
      return tail_replicate(s.L, s.Lambda, s.targets, rng);
    case ExperimentKind::events:
      return event_replicate(s, rng);
    case ExperimentKind::harnack:
      return harnack_replicate(s.L, s.Lambda, s.R_grid, s.trials, s.packing_R, s.delta, rng);
    case ExperimentKind::packing: {
      const Window w = ensemble_window(s.L, s.Lambda);
      RngStream tree_rng = rng;
      const UstRealization u = sample_ust(w, Ordering::lexicographic, tree_rng);
      std::vector<double> out;
      for (const std::size_t R : s.R_grid) out.push_back(static_cast<double>(packing_number(u, Site{0, 0}, R, s.delta)));
      return out;
    }
  }
  throw ContractError("unhandled experiment kind");
}

namespace {

EnsembleOptions ensemble_options(const ExperimentSpec& s) {
  EnsembleOptions o;
  o.seed = s.master_seed;
  o.replicates = s.replicates;
  o.workers = s.workers;
  o.bootstrap = s.bootstrap;
  o.window = s.fit_window;
  o.L = s.L;
  o.Lambda = s.Lambda;
  return o;
}

json exponent_json(const ExponentReport& r) {
  json pts = json::array();
  for (std::size_t k = 0; k < r.xs.size(); ++k) {
    pts.push_back({{"x", r.xs[k]},
                   {"mean", encode_value(r.points[k].mean)},
                   {"stderr", encode_value(r.points[k].std_error)},
                   {"count", r.points[k].count}});
  }
  return {{"points", pts},
          {"fit", fit_json(r.fit)},
          {"estimate", encode_value(r.estimate)},
          {"bootstrap_stderr", encode_value(r.bootstrap_stderr)},
          {"report", json::parse(to_json(r.report))}};
}

json tail_json(const TailEstimate& t) {
  json probs = json::array();
  for (std::size_t i = 0; i < t.lambdas.size(); ++i) {
    json p = proportion_json(t.probabilities[i]);
    p["lambda"] = t.lambdas[i];
    p["dropped"] = static_cast<bool>(t.dropped[i]);
    probs.push_back(p);
  }
  json j = {{"target", {t.target.x, t.target.y}},
            {"probabilities", probs},
            {"target_slope", t.target_slope},
            {"monotone", t.monotone}};
  j["fit"] = t.fit ? fit_json(*t.fit) : json(nullptr);
  return j;
}

// Long-format CSV rows: series, x, y, stderr, count.
struct CsvSink {
  std::ostringstream out;
  CsvSink() { out << "series,x,y,stderr,count\n"; }
  void row(const std::string& series, double x, double y, double se, std::size_t count) {
    const auto fmt = [](double v) {
      if (std::isnan(v)) return std::string();
      std::ostringstream s;
      s.precision(17);
      s << v;
      return s.str();
    };
    out << series << ',' << fmt(x) << ',' << fmt(y) << ',' << fmt(se) << ',' << count << '\n';
  }
};

json reduce_document(const ExperimentSpec& s, const std::vector<std::vector<double>>& rows, CsvSink& csv) {
  const EnsembleOptions opt = ensemble_options(s);
  const auto add_exponent = [&](const std::string& series, const ExponentReport& r) {
    for (std::size_t k = 0; k < r.xs.size(); ++k) {
      csv.row(series, r.xs[k], r.points[k].mean, r.points[k].std_error, r.points[k].count);
    }
    return exponent_json(r);
  };
  json doc;
  switch (s.kind) {
    case ExperimentKind::lerw_growth:
      doc = add_exponent("M_n", reduce_exponent("lerw-growth", kKappa, std::vector<double>(s.n_grid.begin(), s.n_grid.end()),
                                                rows, opt));
      break;
    case ExperimentKind::volume:
      doc = add_exponent("volume", reduce_exponent("volume", kFractalDim,
                                                   std::vector<double>(s.r_grid.begin(), s.r_grid.end()), rows, opt));
      break;
    case ExperimentKind::ondiag:
      doc = add_exponent("p_tilde", reduce_exponent("ondiag", kFractalDim / kWalkDim,
                                                    std::vector<double>(s.time_grid.begin(), s.time_grid.end()), rows,
                                                    opt, true));
      break;
    case ExperimentKind::displacement: {
      const std::size_t K = s.time_grid.size();
      std::vector<std::vector<double>> ext, intr;
      for (const auto& row : rows) {
        ext.emplace_back(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(K));
        intr.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(K), row.end());
      }
      const std::vector<double> xs(s.time_grid.begin(), s.time_grid.end());
      doc["extrinsic"] = add_exponent(
          "extrinsic", reduce_exponent("displacement-extrinsic", s.p / (kKappa * kWalkDim), xs, ext, opt));
      doc["intrinsic"] =
          add_exponent("intrinsic", reduce_exponent("displacement-intrinsic", s.p / kWalkDim, xs, intr, opt));
      break;
    }
    case ExperimentKind::tails: {
      doc["long"] = json::array();
      doc["short"] = json::array();
      for (std::size_t k = 0; k < s.targets.size(); ++k) {
        std::vector<double> d;
        for (const auto& row : rows) d.push_back(row[k]);
        const TailEstimate lt = long_path_tail(s.targets[k], s.lambda_grid, d);
        const TailEstimate st = short_path_tail(s.targets[k], s.lambda_grid, d);
        const std::string tag = std::to_string(s.targets[k].x) + ":" + std::to_string(s.targets[k].y);
        for (std::size_t i = 0; i < s.lambda_grid.size(); ++i) {
          csv.row("long@" + tag, s.lambda_grid[i], lt.probabilities[i].p, std::nan(""), lt.probabilities[i].trials);
          csv.row("short@" + tag, s.lambda_grid[i], st.probabilities[i].p, std::nan(""), st.probabilities[i].trials);
        }
        doc["long"].push_back(tail_json(lt));
        doc["short"].push_back(tail_json(st));
      }
      break;
    }
    case ExperimentKind::collapse: {
      const std::vector<std::size_t> n_grid = collapse_sizes(s);
      const std::vector<std::size_t> times = collapse_times(n_grid, s.t_grid);
      std::map<std::size_t, double> means;
      for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> col;
        for (const auto& row : rows) col.push_back(row[k]);
        means[times[k]] = mean_estimate(col).mean;
      }
      const CurveCollapseReport c = curve_collapse(n_grid, s.t_grid, [&](std::size_t t) { return means.at(t); });
      for (std::size_t j = 0; j < n_grid.size(); ++j) {
        for (std::size_t k = 0; k < s.t_grid.size(); ++k) {
          csv.row("n=" + std::to_string(n_grid[j]), s.t_grid[k], c.curves[j][k], std::nan(""), rows.size());
        }
      }
      doc = {{"n_grid", n_grid},
             {"t_grid", s.t_grid},
             {"curves", c.curves},
             {"max_distance", c.max_distance},
             {"scale", c.scale},
             {"relative_distance", c.relative_distance},
             {"collapsed_fit", fit_json(c.collapsed_fit)},
             {"collapsed_exponent", c.collapsed_exponent}};
      break;
    }
    case ExperimentKind::offdiag: {
      const auto track = offdiag_track(s);
      std::vector<OffdiagPoint> pts;
      for (std::size_t k = 0; k < track.size(); ++k) {
        std::vector<double> col;
        for (const auto& row : rows) col.push_back(row[k]);
        OffdiagPoint p;
        p.n = track[k].first;
        p.x = s.x_grid[k % s.x_grid.size()];
        p.site = track[k].second;
        p.value = mean_estimate(col).mean;
        pts.push_back(p);
        csv.row("n=" + std::to_string(p.n), p.x, p.value, std::nan(""), col.size());
      }
      const OffdiagReport r = offdiag_stretched_fit(pts);
      doc = {{"theta", encode_value(r.theta)},
             {"theta_in_unit_interval", r.theta_in_unit_interval},
             {"inconclusive", r.inconclusive},
             {"points_used", std::count(r.used.begin(), r.used.end(), true)}};
      doc["fit"] = r.fit ? fit_json(*r.fit) : json(nullptr);
      break;
    }
    case ExperimentKind::fluctuation: {
      const FluctuationReport f = fluctuation_tracker(s.r_grid, rows);
      for (std::size_t k = 0; k < s.r_grid.size(); ++k) {
        csv.row("upper_max", static_cast<double>(s.r_grid[k]), f.upper_max[k], std::nan(""), rows.size());
        csv.row("lower_min", static_cast<double>(s.r_grid[k]), std::isfinite(f.lower_min[k]) ? f.lower_min[k] : std::nan(""),
                std::nan(""), rows.size());
      }
      json big = json::array(), small = json::array();
      for (std::size_t k = 0; k < f.big_volume.size(); ++k) {
        json b = json::array(), sm = json::array();
        for (const auto& p : f.big_volume[k]) b.push_back(proportion_json(p));
        for (const auto& p : f.small_volume[k]) sm.push_back(proportion_json(p));
        big.push_back(b);
        small.push_back(sm);
      }
      json lower = json::array();
      for (const double v : f.lower_min) lower.push_back(encode_value(v));
      doc = {{"r_grid", s.r_grid}, {"upper_max", f.upper_max}, {"lower_min", lower},
             {"running_max", f.running_max}, {"lambdas", f.lambdas}, {"big_volume", big},
             {"small_volume", small}};
      break;
    }
    case ExperimentKind::events: {
      std::size_t hits = 0, violations = 0;
      std::map<std::size_t, std::size_t> rejected;
      json distances = json::array();
      for (const auto& row : rows) {
        if (row[0] == 1.0) {
          ++hits;
          distances.push_back(encode_value(row[2]));
          if (row[3] != 1.0) ++violations;
        }
        if (std::isfinite(row[1])) ++rejected[static_cast<std::size_t>(row[1])];
      }
      const ProportionEstimate pe = wilson_score(hits, rows.size());
      csv.row("frequency", static_cast<double>(s.N), pe.p, std::nan(""), pe.trials);
      json rej = json::object();
      for (const auto& [stage, count] : rejected) rej[std::to_string(stage)] = count;
      doc = {{"shape", s.shape},       {"N", s.N},
             {"m", s.m},               {"lambda", s.lambda},
             {"k", s.k},               {"frequency", proportion_json(pe)},
             {"distances", distances}, {"sandwich_violations", violations},
             {"precheck_rejections", rej}};
      break;
    }
    case ExperimentKind::harnack: {
      const HarnackSummary h = reduce_harnack(s.R_grid, rows);
      json per_r = json::array();
      for (std::size_t k = 0; k < s.R_grid.size(); ++k) {
        const double best = h.running_max[k].empty() ? 0.0 : h.running_max[k].back();
        csv.row("max_ratio", static_cast<double>(s.R_grid[k]), best, std::nan(""), rows.size());
        per_r.push_back({{"R", s.R_grid[k]}, {"max_ratio", best}, {"infinite", h.infinite[k]},
                         {"running_max", h.running_max[k]}});
      }
      doc = {{"harnack", per_r}, {"non_decreasing", h.non_decreasing}, {"max_packing", h.max_packing},
             {"packing_R", s.packing_R}, {"delta", s.delta}};
      break;
    }
    case ExperimentKind::packing: {
      json per_r = json::array();
      for (std::size_t k = 0; k < s.R_grid.size(); ++k) {
        std::vector<double> col;
        double best = 0.0;
        for (const auto& row : rows) {
          col.push_back(row[k]);
          best = std::max(best, row[k]);
        }
        const MeanEstimate me = mean_estimate(col);
        csv.row("packing", static_cast<double>(s.R_grid[k]), me.mean, me.std_error, me.count);
        per_r.push_back({{"R", s.R_grid[k]}, {"mean", encode_value(me.mean)}, {"max", best}});
      }
      doc = {{"packing", per_r}, {"delta", s.delta}};
      break;
    }
  }
  return doc;
}

struct ReplicateRecord {
  std::size_t index = 0;
  std::vector<double> values;
  std::optional<std::string> error;
};

std::string record_line(const std::string& hash, const ReplicateRecord& r) {
  json j = {{"spec_hash", hash}, {"replicate", r.index}, {"stream", r.index}};
  j["values"] = r.error ? json(nullptr) : encode_row(r.values);
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j.dump();
}

// Reads complete records; a torn final line (from a kill) is ignored.
std::map<std::size_t, ReplicateRecord> read_records(const fs::path& path, std::optional<std::string>* hash_out,
                                                    bool strict_hash) {
  std::map<std::size_t, ReplicateRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::optional<std::string> hash;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      if (in.peek() == EOF) break;
      throw CorruptInputError("malformed record in " + path.string());
    }
    const auto h = j.at("spec_hash").get<std::string>();
    if (hash && *hash != h) {
      if (strict_hash) throw ValidationError("mixed spec hashes in " + path.string());
      continue;
    }
    hash = h;
    ReplicateRecord r;
    r.index = j.at("replicate").get<std::size_t>();
    if (!j.at("error").is_null()) {
      r.error = j.at("error").get<std::string>();
    } else {
      for (const json& v : j.at("values")) r.values.push_back(decode_value(v));
    }
    out[r.index] = std::move(r);
  }
  if (hash_out) *hash_out = hash;
  return out;
}

std::string gnuplot_script(const ExperimentSpec& s) {
  std::ostringstream g;
  g << "# " << to_string(s.kind) << " (" << s.name << ")\n"
    << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set logscale xy\n"
    << "plot for [series in system(\"tail -n +2 results.csv | cut -d, -f1 | sort -u\")] \\\n"
    << "  'results.csv' using (strcol(1) eq series ? $2 : 1/0):3 with linespoints title series\n";
  return g.str();
}

}  // namespace

std::string reduce_results(const ExperimentSpec& spec, const std::vector<std::vector<double>>& rows) {
  CsvSink csv;
  json doc = {{"spec_hash", spec_hash(spec)}, {"kind", to_string(spec.kind)}, {"replicates", rows.size()}};
  doc["results"] = reduce_document(spec, rows, csv);
  return doc.dump(2);
}

RunManifest run_experiment(const ExperimentSpec& spec_in, const RunOptions& options) {
  ExperimentSpec spec = spec_in;
  validate(spec);
  if (spec.workers == 0) spec.workers = default_workers();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string hash = spec_hash(spec);
  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  const fs::path log_path = dir / "replicates.jsonl";

  std::map<std::size_t, ReplicateRecord> done;
  if (options.resume && fs::exists(log_path)) {
    std::optional<std::string> old_hash;
    done = read_records(log_path, &old_hash, true);
    if (old_hash && *old_hash != hash) {
      throw ValidationError("output directory holds replicates of a different spec (hash " + *old_hash + ")");
    }
    // Drop entries past the current replicate count and rewrite a clean log.
    for (auto it = done.begin(); it != done.end();) it = it->first >= spec.replicates ? done.erase(it) : std::next(it);
  }
  {
    std::ofstream log(log_path, std::ios::trunc);
    for (const auto& [i, r] : done) log << record_line(hash, r) << '\n';
  }
  write_file(dir / "spec.json", to_json(spec) + "\n");

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < spec.replicates; ++i) {
    if (!done.count(i)) todo.push_back(i);
  }
  RunManifest man;
  man.resumed = done.size();
  if (options.stop_after) todo.resize(std::min(todo.size(), *options.stop_after));

  std::mutex sink;
  std::ofstream log(log_path, std::ios::app);
  parallel_for(todo.size(), spec.workers, [&](std::size_t t) {
    ReplicateRecord r;
    r.index = todo[t];
    try {
      r.values = run_replicate(spec, r.index);
    } catch (const Error& e) {
      r.error = e.what();
    }
    const std::string line = record_line(hash, r);
    std::lock_guard<std::mutex> lock(sink);
    log << line << '\n';
    log.flush();
    done[r.index] = std::move(r);
  });
  log.close();
  if (options.stop_after) {
    man.spec_hash = hash;
    man.code_version = code_version();
    return man;
  }

  // Canonical log: replicate order, independent of scheduling.
  {
    std::ofstream canon(log_path, std::ios::trunc);
    for (const auto& [i, r] : done) canon << record_line(hash, r) << '\n';
  }
  std::vector<std::vector<double>> rows;
  for (const auto& [i, r] : done) {
    man.stream_indices.push_back(i);
    if (r.error) {
      ++man.failed;
    } else {
      rows.push_back(r.values);
    }
  }
  if (static_cast<double>(man.failed) > spec.max_failure_fraction * static_cast<double>(spec.replicates)) {
    throw CapacityError(std::to_string(man.failed) + " of " + std::to_string(spec.replicates) +
                        " replicates failed; see replicates.jsonl");
  }
  CsvSink csv;
  json doc = {{"spec_hash", hash}, {"kind", to_string(spec.kind)}, {"replicates", rows.size()},
              {"failed", man.failed}};
  doc["results"] = reduce_document(spec, rows, csv);
  write_file(dir / "results.json", doc.dump(2) + "\n");
  write_file(dir / "results.csv", "# spec_hash " + hash + "\n" + csv.out.str());
  write_file(dir / "plot.gp", "# spec_hash " + hash + "\n" + gnuplot_script(spec));

  man.spec_hash = hash;
  man.code_version = code_version();
  man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const char* f : {"spec.json", "replicates.jsonl", "results.json", "results.csv", "plot.gp"}) {
    man.digests[f] = file_sha256(dir / f);
  }
  json mj = {{"spec_hash", man.spec_hash},   {"code_version", man.code_version},
             {"stream_indices", man.stream_indices}, {"wall_seconds", man.wall_seconds},
             {"digests", man.digests},       {"failed", man.failed},
             {"resumed", man.resumed}};
  write_file(dir / "manifest.json", mj.dump(2) + "\n");
  return man;
}

bool verify_manifest(const fs::path& dir) {
  const json mj = json::parse(read_file(dir / "manifest.json"));
  for (const auto& [name, digest] : mj.at("digests").items()) {
    if (!fs::exists(dir / name) || file_sha256(dir / name) != digest.get<std::string>()) return false;
  }
  return true;
}

std::string fit_results(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw ValidationError("fit needs at least one results directory");
  std::optional<std::string> hash;
  std::optional<ExperimentSpec> spec;
  std::map<std::size_t, ReplicateRecord> all;
  for (const fs::path& d : dirs) {
    const ExperimentSpec s = parse_spec_json(read_file(d / "spec.json"));
    const std::string h = spec_hash(s);
    std::optional<std::string> log_hash;
    auto recs = read_records(d / "replicates.jsonl", &log_hash, true);
    if (log_hash && *log_hash != h) throw ValidationError("replicates in " + d.string() + " do not match its spec");
    if (hash && *hash != h) throw ValidationError("refusing to fit inputs with mixed spec hashes");
    hash = h;
    spec = s;
    for (auto& [i, r] : recs) all[i] = std::move(r);
  }
  std::vector<std::vector<double>> rows;
  for (const auto& [i, r] : all) {
    if (!r.error) rows.push_back(r.values);
  }
  if (rows.empty()) throw InsufficientDataError("no successful replicates to fit");
  return reduce_results(*spec, rows);
}

namespace {

constexpr char kSnapshotMagic[8] = {'U', 'S', 'T', 'S', 'N', 'A', 'P', '1'};
constexpr std::uint16_t kSnapshotVersion = 1;
constexpr std::size_t kSnapshotHeader = 36;
constexpr std::uint32_t kSnapshotRoot = 0xFFFFFFFFu;

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

std::string snapshot_bytes(const UstRealization& u) {
  const Window& w = u.window();
  if (w.is_dual()) throw UnsupportedConventionError("snapshots of dual-lattice trees are not supported");
  std::string out(kSnapshotMagic, kSnapshotMagic + 8);
  put_le<std::uint16_t>(out, kSnapshotVersion);
  put_le<std::uint8_t>(out, w.is_wired() ? 0 : 1);
  put_le<std::uint8_t>(out, 0);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.measurement_radius()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.simulation_radius()));
  put_le<std::uint64_t>(out, u.provenance().master_seed);
  put_le<std::uint64_t>(out, u.provenance().stream_index);
  for (std::size_t v = 0; v < w.num_sites(); ++v) {
    const Vertex p = u.parent(static_cast<Vertex>(v));
    put_le<std::uint32_t>(out, p == kNoVertex ? kSnapshotRoot : p);
  }
  return out;
}

UstRealization parse_snapshot(const std::string& bytes) {
  if (bytes.size() < kSnapshotHeader) throw CorruptInputError("snapshot truncated: header incomplete");
  if (std::memcmp(bytes.data(), kSnapshotMagic, 8) != 0) throw CorruptInputError("snapshot magic mismatch");
  const auto version = get_le<std::uint16_t>(bytes, 8);
  if (version != kSnapshotVersion) throw CorruptInputError("unsupported snapshot version " + std::to_string(version));
  const auto boundary = get_le<std::uint8_t>(bytes, 10);
  if (boundary > 1) throw CorruptInputError("snapshot boundary code invalid");
  const auto L = get_le<std::uint32_t>(bytes, 12);
  const auto L_out = get_le<std::uint32_t>(bytes, 16);
  Provenance prov;
  prov.master_seed = get_le<std::uint64_t>(bytes, 20);
  prov.stream_index = get_le<std::uint64_t>(bytes, 28);
  prov.ordering = "snapshot";
  std::optional<Window> w;
  try {
    w.emplace(static_cast<int>(L), static_cast<int>(L_out), boundary == 0 ? Boundary::wired : Boundary::free);
  } catch (const Error& e) {
    throw CorruptInputError(std::string("snapshot window invalid: ") + e.what());
  }
  const std::size_t n = w->num_sites();
  if (bytes.size() != kSnapshotHeader + 4 * n) throw CorruptInputError("snapshot size does not match its window");
  std::vector<Vertex> parent(w->num_vertices(), kNoVertex);
  for (std::size_t v = 0; v < n; ++v) {
    const auto p = get_le<std::uint32_t>(bytes, kSnapshotHeader + 4 * v);
    parent[v] = p == kSnapshotRoot ? kNoVertex : p;
  }
  try {
    return UstRealization(*w, std::move(parent), prov);
  } catch (const ContractError& e) {
    throw CorruptInputError(std::string("snapshot violates tree invariants: ") + e.what());
  }
}

void save_realization(const UstRealization& u, const fs::path& path) { write_file(path, snapshot_bytes(u)); }

UstRealization load_realization(const fs::path& path) { return parse_snapshot(read_file(path)); }

std::string to_json(const EventReport& r) {
  json stages = json::array();
  for (const StageFlags& f : r.stages) {
    stages.push_back({{"index", f.index}, {"G1", f.g1}, {"G2", f.g2}, {"G3", f.g3}, {"ok", f.ok},
                      {"branch_size", f.branch_size}, {"near_count", f.near_count}});
  }
  json j = {{"event", r.event},
            {"stages", stages},
            {"overall", r.overall},
            {"sandwich_lower", r.sandwich_lower},
            {"sandwich_upper", r.sandwich_upper},
            {"sandwich_holds", r.sandwich_holds},
            {"conventions", r.conventions}};
  j["distance"] = r.distance ? json(*r.distance) : json(nullptr);
  return j.dump();
}

std::string to_json(const EventEstimate& e) {
  json cond = json::array();
  for (const auto& p : e.conditional) cond.push_back(proportion_json(p));
  json j = {{"N", e.N},
            {"frequency", proportion_json(e.overall)},
            {"conditional", cond},
            {"precheck_rejections", e.precheck_rejections},
            {"sandwich_violations", e.sandwich_violations},
            {"distances", e.distances},
            {"capped", e.capped}};
  return j.dump();
}

}  // namespace ustlab

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/events.hpp"
#include "ustlab/harness.hpp"
#include "ustlab/kernel.hpp"
#include "ustlab/parallel.hpp"
#include "ustlab/wilson.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kCapacity = 3, kCorrupt = 4 };

struct Globals {
  unsigned workers = ustlab::default_workers();
  std::string format = "json";
  std::string log_level = "info";
};

ustlab::Site parse_site(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ustlab::ValidationError("expected a site as x,y, got '" + text + "'");
  try {
    return {std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ustlab::ValidationError("expected a site as x,y, got '" + text + "'");
  }
}

// Prints a flat record as one JSON object or a two-line CSV.
void emit(const Globals& g, const json& record) {
  if (g.format == "json") {
    std::cout << record.dump(2) << '\n';
    return;
  }
  std::string head, row;
  for (const auto& [k, v] : record.items()) {
    head += (head.empty() ? "" : ",") + k;
    row += (row.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  std::cout << head << '\n' << row << '\n';
}

int cmd_run(const Globals& g, const std::string& spec_path, const std::string& out_dir, bool no_resume) {
  ustlab::ExperimentSpec spec = ustlab::load_spec(spec_path);
  if (!out_dir.empty()) spec.output_dir = out_dir;
  spec.workers = g.workers;
  spdlog::info("running {} ({} replicates, {} workers) into {}", ustlab::to_string(spec.kind), spec.replicates,
               spec.workers, spec.output_dir);
  ustlab::RunOptions opt;
  opt.resume = !no_resume;
  const ustlab::RunManifest m = ustlab::run_experiment(spec, opt);
  emit(g, {{"spec_hash", m.spec_hash},
           {"code_version", m.code_version},
           {"replicates", m.stream_indices.size()},
           {"failed", m.failed},
           {"resumed", m.resumed},
           {"wall_seconds", m.wall_seconds},
           {"output_dir", spec.output_dir}});
  return kOk;
}

int cmd_sample(const Globals& g, int L, int L_out, const std::string& boundary, std::uint64_t seed,
               std::uint64_t stream, const std::string& ordering, const std::string& out) {
  const ustlab::Window w(L, L_out, ustlab::parse_boundary(boundary));
  ustlab::RngStream rng(seed, stream);
  const ustlab::UstRealization u = ustlab::sample_ust(w, ustlab::parse_ordering(ordering), rng);
  ustlab::save_realization(u, out);
  spdlog::info("wrote {} ({} vertices)", out, u.num_vertices());
  emit(g, {{"snapshot", out},
           {"vertices", u.num_vertices()},
           {"sha256", ustlab::file_sha256(out)},
           {"seed", seed},
           {"stream", stream}});
  return kOk;
}

int cmd_kernel(const Globals& g, const std::string& snapshot, const std::string& origin_text, std::size_t n_max,
               const std::vector<std::string>& track, double prune, const std::string& out) {
  const ustlab::UstRealization u = ustlab::load_realization(snapshot);
  const ustlab::Site origin = parse_site(origin_text);
  ustlab::HeatKernelOptions opt;
  opt.n_max = n_max;
  opt.prune_mass = prune;
  for (const auto& t : track) opt.track.push_back(parse_site(t));
  const ustlab::HeatKernelProfile prof = ustlab::heat_kernel_exact(u, origin, opt);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw ustlab::Error("cannot write " + out);
    os = &file;
  }
  os->precision(17);
  if (g.format == "csv") {
    if (opt.track.empty()) {
      *os << "n,value\n";
      for (std::size_t n = 0; n < prof.on_diagonal.size(); ++n) *os << n << ',' << prof.on_diagonal[n] << '\n';
    } else {
      *os << "n,dx,dy,value\n";
      for (std::size_t n = 0; n < prof.on_diagonal.size(); ++n) *os << n << ",0,0," << prof.on_diagonal[n] << '\n';
      for (std::size_t k = 0; k < prof.tracked.size(); ++k) {
        const int dx = prof.tracked[k].x - origin.x, dy = prof.tracked[k].y - origin.y;
        for (std::size_t n = 0; n < prof.off_diagonal[k].size(); ++n) {
          *os << n << ',' << dx << ',' << dy << ',' << prof.off_diagonal[k][n] << '\n';
        }
      }
    }
  } else {
    json tracked = json::array();
    for (std::size_t k = 0; k < prof.tracked.size(); ++k) {
      tracked.push_back({{"dx", prof.tracked[k].x - origin.x},
                         {"dy", prof.tracked[k].y - origin.y},
                         {"values", prof.off_diagonal[k]}});
    }
    *os << json{{"origin", {origin.x, origin.y}},
                {"n_max", prof.n_max},
                {"on_diagonal", prof.on_diagonal},
                {"tracked", tracked},
                {"lost_mass", prof.lost_mass},
                {"max_normalization_error", prof.max_normalization_error}}
               .dump()
        << '\n';
  }
  return kOk;
}

int cmd_fit(const Globals& g, const std::vector<std::string>& dirs) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const std::string doc = ustlab::fit_results(paths);
  if (g.format == "json") {
    std::cout << doc << '\n';
  } else {
    const json j = json::parse(doc);
    emit(g, {{"spec_hash", j["spec_hash"]}, {"kind", j["kind"]}, {"replicates", j["replicates"]}});
  }
  return kOk;
}

struct EventArgs {
  std::string shape = "straight";
  int N = 1;
  int m = 32;
  double lambda = 8.0;
  int k = 4;
  double c1 = 1.0;
  int min_scale = ustlab::kDefaultMinScale;
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  bool full = false;
};

int cmd_event(const Globals& g, const EventArgs& a) {
  if (auto warning = ustlab::check_scale(a.m, ustlab::ScaleCheck{a.min_scale})) spdlog::warn("{}", *warning);
  if ((a.shape == "straight" || a.shape == "spiral") && a.full) {
    const ustlab::ScaleCheck check{a.min_scale};
    const ustlab::ScalePath p = a.shape == "straight"
                                    ? ustlab::build_straight_path(ustlab::Site{a.N * a.m, 0}, a.m, check)
                                    : ustlab::build_spiral_path(a.N, a.m, check);
    ustlab::EventEstimateOptions opt;
    opt.seed = a.seed;
    opt.replicates = a.replicates;
    opt.workers = g.workers;
    opt.lazy = false;
    const ustlab::EventEstimate e = ustlab::estimate_event_probability(p, a.lambda, a.k, opt);
    const json j = json::parse(ustlab::to_json(e));
    if (g.format == "json") {
      std::cout << j.dump(2) << '\n';
    } else {
      emit(g, {{"shape", a.shape}, {"N", a.N}, {"successes", e.overall.successes}, {"trials", e.overall.trials},
               {"p", e.overall.p}, {"lo", e.overall.lo}, {"hi", e.overall.hi}});
    }
    return kOk;
  }
  ustlab::ExperimentSpec spec;
  spec.kind = ustlab::ExperimentKind::events;
  spec.shape = a.shape;
  spec.N = a.N;
  spec.m = a.m;
  spec.lambda = a.lambda;
  spec.k = a.k;
  spec.c1 = a.c1;
  spec.min_scale = a.min_scale;
  spec.replicates = a.replicates;
  spec.master_seed = a.seed;
  ustlab::validate(spec);
  std::vector<std::vector<double>> rows(spec.replicates);
  ustlab::parallel_for(spec.replicates, g.workers, [&](std::size_t i) { rows[i] = ustlab::run_replicate(spec, i); });
  const json doc = json::parse(ustlab::reduce_results(spec, rows));
  if (g.format == "json") {
    std::cout << doc.dump(2) << '\n';
  } else {
    const json& f = doc["results"]["frequency"];
    emit(g, {{"shape", a.shape}, {"N", a.N}, {"successes", f["successes"]}, {"trials", f["trials"]},
             {"p", f["p"]}, {"lo", f["lo"]}, {"hi", f["hi"]}});
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ustlab: uniform spanning tree simulation lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--workers", g.workers, "Worker threads (default: $USTLAB_WORKERS or hardware concurrency)")
      ->check(CLI::PositiveNumber);
  app.add_option("--output-format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--log-level", g.log_level, "Log level")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  std::string spec_path, run_out;
  bool no_resume = false;
  auto* run = app.add_subcommand("run", "Run an experiment spec (TOML or JSON)");
  run->add_option("spec", spec_path, "Spec file")->required();
  run->add_option("--out", run_out, "Override the spec's output directory");
  run->add_flag("--no-resume", no_resume, "Ignore replicates recorded by an earlier run");

  int L = 16, L_out = 64;
  std::string boundary = "wired", ordering = "lexicographic", snap_out;
  std::uint64_t seed = 0, stream = 0;
  auto* sample = app.add_subcommand("sample", "Sample one spanning tree and save a snapshot");
  sample->add_option("--L", L, "Measurement radius")->required();
  sample->add_option("--Lout", L_out, "Simulation radius")->required();
  sample->add_option("--boundary", boundary, "wired or free")->check(CLI::IsMember({"wired", "free"}));
  sample->add_option("--seed", seed, "Master seed");
  sample->add_option("--stream", stream, "Stream index");
  sample->add_option("--ordering", ordering, "Wilson ordering")
      ->check(CLI::IsMember({"lexicographic", "random", "adaptive-spiral"}));
  sample->add_option("--out", snap_out, "Snapshot path")->required();

  std::string snapshot, origin = "0,0", kernel_out;
  std::size_t n_max = 1024;
  double prune = 0.0;
  std::vector<std::string> track;
  auto* kernel = app.add_subcommand("kernel", "Exact heat kernel of a snapshot");
  kernel->add_option("--snapshot", snapshot, "Snapshot path")->required();
  kernel->add_option("--origin", origin, "Origin site x,y");
  kernel->add_option("--nmax", n_max, "Largest time");
  kernel->add_option("--track", track, "Tracked sites x,y (repeatable)");
  kernel->add_option("--prune", prune, "Prune mass threshold (0 keeps the kernel exact)");
  kernel->add_option("--out", kernel_out, "Output file (default stdout)");

  std::vector<std::string> fit_dirs;
  auto* fit = app.add_subcommand("fit", "Refit recorded replicates");
  fit->add_option("dirs", fit_dirs, "Result directories")->required();

  EventArgs ev;
  auto* event = app.add_subcommand("event", "Estimate a path-event probability");
  event->add_option("--shape", ev.shape, "Path shape")->check(CLI::IsMember({"straight", "grid", "spiral", "s"}));
  event->add_option("--N", ev.N, "Number of scale steps");
  event->add_option("--m", ev.m, "Box scale");
  event->add_option("--lambda", ev.lambda, "Lambda (>= 2)");
  event->add_option("--k", ev.k, "First-walk offset divisor");
  event->add_option("--c1", ev.c1, "Regularity constant of the S-path event");
  event->add_option("--min-scale", ev.min_scale, "Smallest accepted m (down to 8)");
  event->add_option("--replicates", ev.replicates, "Replicates");
  event->add_option("--seed", ev.seed, "Master seed");
  event->add_flag("--full", ev.full, "Run every stage (reports per-stage conditional rates)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }
  spdlog::set_default_logger(spdlog::default_logger());
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    if (*run) return cmd_run(g, spec_path, run_out, no_resume);
    if (*sample) return cmd_sample(g, L, L_out, boundary, seed, stream, ordering, snap_out);
    if (*kernel) return cmd_kernel(g, snapshot, origin, n_max, track, prune, kernel_out);
    if (*fit) return cmd_fit(g, fit_dirs);
    if (*event) return cmd_event(g, ev);
  } catch (const ustlab::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const ustlab::DomainError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const ustlab::CapacityError& e) {
    spdlog::error("{}", e.what());
    return kCapacity;
  } catch (const ustlab::CorruptInputError& e) {
    spdlog::error("{}", e.what());
    return kCorrupt;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}

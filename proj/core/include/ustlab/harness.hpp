#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ustlab/events.hpp"
#include "ustlab/lattice.hpp"
#include "ustlab/stats.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab {

/// Library version, recorded in every manifest.
const char* code_version() noexcept;

enum class ExperimentKind : std::uint8_t {
  lerw_growth,
  volume,
  ondiag,
  offdiag,
  displacement,
  tails,
  collapse,
  events,
  harnack,
  packing,
  fluctuation,
};

const char* to_string(ExperimentKind k) noexcept;
ExperimentKind parse_experiment_kind(const std::string& text);

/// Declarative experiment description. Fields a kind does not use keep their
/// defaults and still round-trip.
struct ExperimentSpec {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  ExperimentKind kind = ExperimentKind::lerw_growth;
  std::string name;

  int L = 96;
  int Lambda = 4;

  std::vector<int> n_grid;
  std::vector<std::size_t> r_grid;
  std::vector<double> lambda_grid;
  std::vector<double> t_grid;
  std::vector<std::size_t> time_grid;
  std::vector<double> x_grid;
  std::vector<std::size_t> R_grid;
  std::vector<Site> targets;

  std::size_t replicates = 100;
  std::uint64_t master_seed = 0;
  /// 0 selects default_workers(). Not part of the spec hash.
  unsigned workers = 0;
  /// Not part of the spec hash.
  std::string output_dir = "results";
  std::optional<FitWindow> fit_window;
  std::size_t bootstrap = 200;
  /// The run fails when more than this fraction of replicates error.
  double max_failure_fraction = 0.01;

  // displacement
  double p = 1.0;
  std::size_t trajectories = 100;
  // heat kernels
  double prune_mass = 1e-14;
  // events
  std::string shape = "straight";
  int N = 1;
  int m = 32;
  double lambda = 8.0;
  int k = 4;
  double c1 = 1.0;
  int min_scale = kDefaultMinScale;
  // harnack / packing
  std::size_t trials = 20;
  double delta = 0.125;
  std::size_t packing_R = 32;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

/// Throws ValidationError describing the first invalid field.
void validate(const ExperimentSpec& spec);

std::string to_json(const ExperimentSpec& spec);
std::string to_toml(const ExperimentSpec& spec);
ExperimentSpec parse_spec_json(const std::string& text);
ExperimentSpec parse_spec_toml(const std::string& text);
/// Chooses the format by extension (.json, else TOML).
ExperimentSpec load_spec(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON of the result-determining fields.
std::string spec_hash(const ExperimentSpec& spec);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

struct RunManifest {
  std::string spec_hash;
  std::string code_version;
  std::vector<std::uint64_t> stream_indices;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> digests;
  std::size_t failed = 0;
  std::size_t resumed = 0;
};

struct RunOptions {
  /// Reuse replicates already recorded under the same spec hash.
  bool resume = true;
  /// Stop after this many new replicates without writing results (simulates a kill).
  std::optional<std::size_t> stop_after;
};

/// One replicate of the experiment: the row of observables for replicate i,
/// drawn from RngStream(master_seed, i).
std::vector<double> run_replicate(const ExperimentSpec& spec, std::size_t i);

/// Writes spec.json, replicates.jsonl, results.json, results.csv, plot.gp
/// and manifest.json under spec.output_dir.
RunManifest run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// Reduces recorded replicate rows to the results document of the kind.
std::string reduce_results(const ExperimentSpec& spec, const std::vector<std::vector<double>>& rows);

/// Re-reduces the replicates of one or more result directories. All inputs
/// must carry the same spec hash.
std::string fit_results(const std::vector<std::filesystem::path>& dirs);

/// Checks the digests recorded in a manifest against the files on disk.
bool verify_manifest(const std::filesystem::path& dir);

/// Binary snapshot: 36-byte header then one u32 parent per site (row-major),
/// 0xFFFFFFFF for the root.
void save_realization(const UstRealization& u, const std::filesystem::path& path);
UstRealization load_realization(const std::filesystem::path& path);
std::string snapshot_bytes(const UstRealization& u);
UstRealization parse_snapshot(const std::string& bytes);

std::string to_json(const EventReport& r);
std::string to_json(const EventEstimate& e);

}  // namespace ustlab

#pragma once

// Experiment harness: the registry of benchmark experiments with their
// published training settings, dataset ingestion, run persistence, sweeps,
// and comparison reports. The CLI in tools/ is a thin wrapper over these
// functions; tests call them directly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bfvi/diagnostics.hpp"
#include "bfvi/models.hpp"
#include "bfvi/reference.hpp"
#include "bfvi/vi.hpp"

namespace bfvi {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- ingestion -----------------------------------------------------------------

// CSV with a header row, UTF-8, '.' decimal. Every listed column must be
// present and fully populated; a short column is reported by name.
Dataset ingest_csv(const std::filesystem::path& path,
                   std::span<const std::string> required_columns);

// {"y": [...], "sigma": [...]}
Dataset ingest_eight_schools_json(const std::filesystem::path& path);

// Dispatches on the experiment's schema (CSV columns or the JSON form).
Dataset ingest(const std::filesystem::path& path, const std::string& experiment);

// --- registry --------------------------------------------------------------------

struct ExperimentSpec {
  std::string name;
  TrainConfig defaults;           // published per-experiment settings
  std::string data_file;          // relative to the data dir; empty = inline data
  std::vector<std::string> csv_columns;  // required columns when CSV
  bool analytic_kl = false;       // conjugate posterior available
  bool evidence_quadrature = false;
  double quad_lo = 0.0, quad_hi = 0.0;
  int quad_nodes = 0;
  bool gate_on_predictive = false;  // MCMC gate runs on predictive quantities
};

const std::map<std::string, ExperimentSpec>& experiment_registry();
std::vector<std::string> experiment_names();

ProbabilisticModel make_experiment_model(const std::string& experiment,
                                         const std::filesystem::path& data_dir,
                                         const std::string& data_override = "");

// --- run configuration --------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;
  std::string method = "bfvi";  // bfvi | mfgauss
  TrainConfig train;
  int s_diag = 5000;
  int n_posterior_samples = 5000;
  std::filesystem::path data_dir = "data";
  std::string data_override;  // optional dataset path
  std::filesystem::path out_dir;

  void validate() const;  // ConfigError on unknown experiment/method
};

// Resolves registry defaults, then config-file values, then explicit flags.
ExperimentConfig resolve_config(
    const std::string& experiment, const std::string& method,
    const std::map<std::string, std::string>& file_values,
    const std::map<std::string, std::string>& flag_values);

// Content hash (FNV-1a 64) of the input files and config payload.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t hash_file(const std::filesystem::path& path);

// --- persistence -----------------------------------------------------------------

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);
void write_csv(const std::filesystem::path& path,
               std::span<const std::string> header,
               const std::vector<std::vector<double>>& columns);
std::vector<std::vector<double>> read_csv_columns(
    const std::filesystem::path& path, std::vector<std::string>& header_out);

// --- run entry points --------------------------------------------------------------

struct FitRunOutput {
  std::filesystem::path out_dir;
  double final_elbo = 0.0;
  double k_hat = 0.0;
  std::string verdict;
  std::optional<double> kl;
  double wall_seconds = 0.0;
  bool diverged = false;
};

// Trains, draws the posterior bank, runs diagnostics, persists
// config.json/report.json/samples.csv/trace.csv. On training divergence the
// record is persisted with a failure flag and TrainingError is rethrown.
FitRunOutput run_fit(const ExperimentConfig& config);

struct McmcRunOutput {
  std::filesystem::path out_dir;
  std::vector<McmcChain> chains;
  ChainDiagnostics diagnostics;
  bool gate_passed = false;
};

// Runs `n_chains` adaptive RWM chains (seeds seed+chain), writes chains CSVs,
// pooled constrained samples, and the diagnostics JSON. Throws GateError when
// any gated split-Rhat reaches 1.01.
McmcRunOutput run_mcmc(const ExperimentConfig& config, int n_chains, int n_kept,
                       int n_warmup, int thinning);

struct SweepRow {
  int order;
  int replicate;
  std::uint64_t seed;
  double kl;
};

// KL-vs-M sweep for the experiments with analytic or quadrature evidence.
std::vector<SweepRow> run_sweep_m(const ExperimentConfig& config,
                                  std::span<const int> m_list, int replicates);

// Comparison report across runs against an MCMC run directory, a fit run
// directory, or "analytic" (conjugate Bernoulli only).
struct CompareOutput {
  std::filesystem::path report_path;
};
CompareOutput run_compare(const ExperimentConfig& config,
                          std::span<const std::string> run_dirs,
                          const std::string& against);

}  // namespace bfvi

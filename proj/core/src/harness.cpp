#include "bfvi/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bfvi/math.hpp"
#include "bfvi/quadrature.hpp"

namespace bfvi {

namespace fs = std::filesystem;
using nlohmann::json;

// --- ingestion ----------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset ingest_csv(const fs::path& path,
                   std::span<const std::string> required_columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV: " + path.string());
  const std::vector<std::string> header = split_line(line);
  std::vector<std::vector<double>> cols(header.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      const std::size_t short_idx = std::min(fields.size(), header.size() - 1);
      throw ConfigError("CSV " + path.string() + " row " + std::to_string(row) +
                        ": column '" + header[short_idx] + "' is short");
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      try {
        cols[c].push_back(std::stod(fields[c]));
      } catch (const std::exception&) {
        throw ConfigError("CSV " + path.string() + " row " + std::to_string(row) +
                          ": column '" + header[c] + "' is not numeric: " +
                          fields[c]);
      }
    }
  }
  Dataset d;
  for (std::size_t c = 0; c < header.size(); ++c) {
    d.add_column(header[c], std::move(cols[c]));
  }
  for (const std::string& r : required_columns) {
    if (!d.has(r)) {
      throw ConfigError("CSV " + path.string() + ": missing required column '" +
                        r + "'");
    }
  }
  return d;
}

Dataset ingest_eight_schools_json(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
  }
  if (!j.contains("y") || !j.contains("sigma")) {
    throw ConfigError(path.string() + ": expected fields {\"y\", \"sigma\"}");
  }
  Dataset d;
  d.add_column("y", j["y"].get<std::vector<double>>());
  d.add_column("sigma", j["sigma"].get<std::vector<double>>());
  if (d.col("y").size() != d.col("sigma").size()) {
    throw ConfigError(path.string() + ": y and sigma lengths differ");
  }
  return d;
}

Dataset ingest(const fs::path& path, const std::string& experiment) {
  const ExperimentSpec& spec = experiment_registry().at(experiment);
  if (experiment == "eight_schools_cp" || experiment == "eight_schools_ncp") {
    return ingest_eight_schools_json(path);
  }
  return ingest_csv(path, spec.csv_columns);
}

// --- registry ------------------------------------------------------------------

const std::map<std::string, ExperimentSpec>& experiment_registry() {
  static const std::map<std::string, ExperimentSpec> reg = [] {
    std::map<std::string, ExperimentSpec> r;
    {
      ExperimentSpec s;
      s.name = "bernoulli";
      s.defaults.order = 10;
      s.defaults.mc_samples = 1000;
      s.defaults.epochs = 1000;
      s.analytic_kl = true;
      s.evidence_quadrature = true;
      s.quad_lo = -16.0;
      s.quad_hi = 26.0;
      s.quad_nodes = 2048;
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "cauchy";
      s.defaults.order = 50;
      s.defaults.mc_samples = 10000;
      s.defaults.epochs = 1000;
      s.data_file = "cauchy.csv";
      s.csv_columns = {"y"};
      s.evidence_quadrature = true;
      s.quad_lo = -15.0;
      s.quad_hi = 15.0;
      s.quad_nodes = 2048;
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "toy_linreg";
      s.defaults.order = 10;
      s.defaults.mc_samples = 600;
      s.defaults.epochs = 15000;
      s.data_file = "toy_linreg.csv";
      s.csv_columns = {"x1", "x2", "y"};
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "eight_schools_cp";
      s.defaults.order = 50;
      s.defaults.mc_samples = 10;
      s.defaults.epochs = 15000;
      s.data_file = "eight_schools.json";
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "eight_schools_ncp";
      s.defaults.order = 50;
      s.defaults.mc_samples = 10;
      s.defaults.epochs = 15000;
      s.data_file = "eight_schools.json";
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "bnn_regression";
      s.defaults.order = 50;
      s.defaults.mc_samples = 600;
      s.defaults.epochs = 20000;
      s.data_file = "bnn_regression.csv";
      s.csv_columns = {"x", "y"};
      s.gate_on_predictive = true;
      r[s.name] = s;
    }
    {
      ExperimentSpec s;
      s.name = "diamonds";
      s.defaults.order = 50;
      s.defaults.mc_samples = 10;
      s.defaults.epochs = 30000;
      s.defaults.batch_size = 512;
      s.data_file = "diamonds.csv";
      s.csv_columns = {"y"};
      r[s.name] = s;
    }
    return r;
  }();
  return reg;
}

std::vector<std::string> experiment_names() {
  std::vector<std::string> out;
  for (const auto& [name, spec] : experiment_registry()) out.push_back(name);
  return out;
}

ProbabilisticModel make_experiment_model(const std::string& experiment,
                                         const fs::path& data_dir,
                                         const std::string& data_override) {
  const auto it = experiment_registry().find(experiment);
  if (it == experiment_registry().end()) {
    std::string names;
    for (const std::string& n : experiment_names()) names += " " + n;
    throw ConfigError("unknown experiment '" + experiment +
                      "'; valid entries:" + names);
  }
  const ExperimentSpec& spec = it->second;
  fs::path path;
  if (!spec.data_file.empty()) {
    path = data_override.empty() ? data_dir / spec.data_file
                                 : fs::path(data_override);
    if (!fs::exists(path)) {
      throw ConfigError("dataset not found: " + path.string());
    }
  }

  if (experiment == "bernoulli") return bernoulli_beta_model();
  if (experiment == "cauchy") {
    Dataset d = ingest_csv(path, spec.csv_columns);
    auto y = d.col("y");
    return cauchy_model(std::vector<double>(y.begin(), y.end()));
  }
  if (experiment == "toy_linreg") {
    return toy_linreg_model(ingest_csv(path, spec.csv_columns));
  }
  if (experiment == "eight_schools_cp") {
    return eight_schools_model(EightSchoolsParam::centered,
                               ingest_eight_schools_json(path));
  }
  if (experiment == "eight_schools_ncp") {
    return eight_schools_model(EightSchoolsParam::non_centered,
                               ingest_eight_schools_json(path));
  }
  if (experiment == "bnn_regression") {
    return bnn_regression_model(ingest_csv(path, spec.csv_columns));
  }
  if (experiment == "diamonds") {
    return diamonds_model(ingest_csv(path, spec.csv_columns));
  }
  throw ConfigError("unhandled experiment: " + experiment);
}

// --- config resolution -----------------------------------------------------------

void ExperimentConfig::validate() const {
  if (experiment_registry().find(experiment) == experiment_registry().end()) {
    std::string names;
    for (const std::string& n : experiment_names()) names += " " + n;
    throw ConfigError("unknown experiment '" + experiment +
                      "'; valid entries:" + names);
  }
  if (method != "bfvi" && method != "mfgauss") {
    throw ConfigError("unknown method '" + method + "', expected bfvi|mfgauss");
  }
  if (train.mc_samples < 1 || train.epochs < 1 || !(train.lr > 0.0)) {
    throw ConfigError("invalid training config: S >= 1, epochs >= 1, lr > 0");
  }
}

ExperimentConfig resolve_config(
    const std::string& experiment, const std::string& method,
    const std::map<std::string, std::string>& file_values,
    const std::map<std::string, std::string>& flag_values) {
  const auto it = experiment_registry().find(experiment);
  if (it == experiment_registry().end()) {
    std::string names;
    for (const std::string& n : experiment_names()) names += " " + n;
    throw ConfigError("unknown experiment '" + experiment +
                      "'; valid entries:" + names);
  }
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.method = method.empty() ? "bfvi" : method;
  cfg.train = it->second.defaults;
  if (const char* env = std::getenv("BFVI_DATA_DIR")) cfg.data_dir = env;

  auto apply = [&](const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
      try {
        if (key == "M") {
          cfg.train.order = std::stoi(value);
        } else if (key == "S") {
          cfg.train.mc_samples = std::stoi(value);
        } else if (key == "epochs") {
          cfg.train.epochs = std::stoi(value);
        } else if (key == "lr") {
          cfg.train.lr = std::stod(value);
        } else if (key == "seed") {
          cfg.train.seed = std::stoull(value);
        } else if (key == "batch") {
          cfg.train.batch_size = std::stoi(value);
        } else if (key == "s-diag" || key == "s_diag") {
          cfg.s_diag = std::stoi(value);
        } else if (key == "out") {
          cfg.out_dir = value;
        } else if (key == "data-dir" || key == "data_dir") {
          cfg.data_dir = value;
        } else if (key == "data") {
          cfg.data_override = value;
        } else if (key == "method") {
          cfg.method = value;
        } else {
          throw ConfigError("unknown config key '" + key + "'");
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw ConfigError("bad value for config key '" + key + "': " + value);
      }
    }
  };
  apply(file_values);
  apply(flag_values);

  if (cfg.out_dir.empty()) {
    fs::path root = "runs";
    if (const char* env = std::getenv("BFVI_OUT_ROOT")) root = env;
    cfg.out_dir = root / (cfg.experiment + "_" + cfg.method + "_M" +
                          std::to_string(cfg.train.order) + "_seed" +
                          std::to_string(cfg.train.seed));
  }
  cfg.validate();
  return cfg;
}

// --- hashing / persistence ---------------------------------------------------------

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const fs::path& path) {
  const std::string content = read_file(path);
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(content.data()), content.size()));
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const fs::path& path, std::span<const std::string> header,
               const std::vector<std::vector<double>>& columns) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    out += header[c];
    out += c + 1 == header.size() ? '\n' : ',';
  }
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out += format_double(columns[c][r]);
      out += c + 1 == columns.size() ? '\n' : ',';
    }
  }
  write_text_atomic(path, out);
}

std::vector<std::vector<double>> read_csv_columns(
    const fs::path& path, std::vector<std::string>& header_out) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV " + path.string());
  header_out = split_line(line);
  std::vector<std::vector<double>> cols(header_out.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    for (std::size_t c = 0; c < fields.size() && c < cols.size(); ++c) {
      cols[c].push_back(std::stod(fields[c]));
    }
  }
  return cols;
}

// --- run_fit -------------------------------------------------------------------------

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["method"] = cfg.method;
  j["M"] = cfg.train.order;
  j["S"] = cfg.train.mc_samples;
  j["epochs"] = cfg.train.epochs;
  j["lr"] = cfg.train.lr;
  j["rms_decay"] = cfg.train.rms_decay;
  j["rms_eps"] = cfg.train.rms_eps;
  j["seed"] = cfg.train.seed;
  j["batch"] = cfg.train.batch_size;
  j["s_diag"] = cfg.s_diag;
  j["n_posterior_samples"] = cfg.n_posterior_samples;
  const ExperimentSpec& spec = experiment_registry().at(cfg.experiment);
  if (!spec.data_file.empty()) {
    const fs::path data_path = cfg.data_override.empty()
                                   ? cfg.data_dir / spec.data_file
                                   : fs::path(cfg.data_override);
    j["data_file"] = data_path.string();
    j["data_hash"] = hash_file(data_path);
  }
  j["created_at"] = now_iso8601();
  return j;
}

void persist_samples_csv(const fs::path& path, const ProbabilisticModel& model,
                         const SampleBank& bank) {
  std::vector<std::vector<double>> cols(
      static_cast<std::size_t>(model.dim) + 1);
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const std::vector<double> constrained = model.constrain(bank.theta_row(s));
    for (int j = 0; j < model.dim; ++j) {
      cols[static_cast<std::size_t>(j)].push_back(
          constrained[static_cast<std::size_t>(j)]);
    }
    cols[static_cast<std::size_t>(model.dim)].push_back(bank.log_q[s]);
  }
  std::vector<std::string> header = model.param_names;
  header.push_back("log_q");
  write_csv(path, header, cols);
}

}  // namespace

FitRunOutput run_fit(const ExperimentConfig& config) {
  config.validate();
  const ExperimentSpec& spec = experiment_registry().at(config.experiment);
  const ProbabilisticModel model = make_experiment_model(
      config.experiment, config.data_dir, config.data_override);

  FitRunOutput out;
  out.out_dir = config.out_dir;
  fs::create_directories(config.out_dir);
  write_text_atomic(config.out_dir / "config.json", config_json(config).dump(2) + "\n");

  const FamilyKind kind = family_kind_from_name(config.method);
  FitResult fit;
  try {
    fit = train(model, kind, config.train);
  } catch (const TrainingError& e) {
    json report;
    report["status"] = "diverged";
    report["error"] = e.what();
    report["failed_step"] = e.index;
    write_text_atomic(config.out_dir / "report.json", report.dump(2) + "\n");
    out.diverged = true;
    throw;
  }

  // Trace CSV.
  {
    std::vector<double> steps(fit.elbo_trace.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      steps[i] = static_cast<double>(i);
    }
    const std::vector<std::string> header = {"step", "elbo"};
    write_csv(config.out_dir / "trace.csv", header, {steps, fit.elbo_trace});
  }

  // Posterior bank and diagnostics; the diagnostic stream is decoupled from
  // the training stream but still seed-deterministic.
  Rng diag_rng(config.train.seed ^ 0xd1a6005ecafeULL);
  const SampleBank bank =
      sample_posterior(fit.family, config.n_posterior_samples, diag_rng);
  persist_samples_csv(config.out_dir / "samples.csv", model, bank);

  Rng psis_rng(config.train.seed ^ 0x9e3779b97f4a7c15ULL);
  const PsisReport psis = psis_khat(fit.family, model, config.s_diag, psis_rng);

  json report;
  report["status"] = "ok";
  report["experiment"] = config.experiment;
  report["method"] = config.method;
  report["param_names"] = model.param_names;
  {
    std::vector<std::string> tags;
    for (Constraint c : model.constraints) {
      tags.push_back(c == Constraint::identity
                         ? "identity"
                         : (c == Constraint::unit_interval ? "sigmoid" : "exp"));
    }
    report["constraints"] = tags;
  }
  report["n_params"] = fit.family.params().size();
  report["final_elbo"] = fit.elbo_trace.back();
  report["wall_seconds"] = fit.wall_seconds;
  report["clipped_steps"] = fit.clipped_steps.size();
  report["k_hat"] = std::isfinite(psis.k_hat) ? json(psis.k_hat) : json("inf");
  report["psis_tail_count"] = psis.tail_count;
  report["psis_verdict"] = verdict_name(psis.verdict);
  out.k_hat = psis.k_hat;
  out.verdict = verdict_name(psis.verdict);
  out.final_elbo = fit.elbo_trace.back();
  out.wall_seconds = fit.wall_seconds;

  if (spec.analytic_kl && config.experiment == "bernoulli") {
    const BetaDistribution post = analytic_beta_posterior(
        1.1, 1.1, model.data->col("y"));
    Rng kl_rng(config.train.seed ^ 0x517cc1b727220a95ULL);
    double se = 0.0;
    const double kl = kl_vs_analytic(
        fit.family,
        [&](std::span<const double> th) {
          return post.log_pdf_unconstrained(th[0]);
        },
        10000, kl_rng, &se);
    report["kl_vs_analytic"] = kl;
    report["kl_se"] = se;
    out.kl = kl;
  } else if (spec.evidence_quadrature) {
    const double log_z = log_evidence_quadrature_1d(model, spec.quad_lo,
                                                    spec.quad_hi, spec.quad_nodes);
    Rng kl_rng(config.train.seed ^ 0x517cc1b727220a95ULL);
    double se = 0.0;
    const double kl =
        kl_via_evidence(fit.family, model, log_z, 10000, kl_rng, &se);
    report["log_evidence"] = log_z;
    report["kl_via_evidence"] = kl;
    report["kl_se"] = se;
    out.kl = kl;
  }
  write_text_atomic(config.out_dir / "report.json", report.dump(2) + "\n");
  return out;
}

// --- run_mcmc -------------------------------------------------------------------------

McmcRunOutput run_mcmc(const ExperimentConfig& config, int n_chains, int n_kept,
                       int n_warmup, int thinning) {
  config.validate();
  if (n_chains < 2) {
    throw ConfigError("mcmc: need >= 2 chains for split-Rhat");
  }
  const ExperimentSpec& spec = experiment_registry().at(config.experiment);
  const ProbabilisticModel model = make_experiment_model(
      config.experiment, config.data_dir, config.data_override);

  // The centered-parameterization ground truth is generated in the easier
  // non-centered coordinates and transformed, school by school.
  const bool cp_via_ncp = config.experiment == "eight_schools_cp";
  const ProbabilisticModel sampling_model =
      cp_via_ncp ? make_experiment_model("eight_schools_ncp", config.data_dir,
                                         config.data_override)
                 : model;

  McmcRunOutput out;
  out.out_dir = config.out_dir;
  fs::create_directories(config.out_dir);

  for (int c = 0; c < n_chains; ++c) {
    McmcChain chain = rwm_sample(sampling_model, n_warmup, n_kept, thinning,
                                 config.train.seed + static_cast<std::uint64_t>(c));
    if (cp_via_ncp) {
      // (mu, log tau, theta_tilde) -> (mu, log tau, mu + tau * theta_tilde)
      for (int i = 0; i < chain.n_kept; ++i) {
        double* row = chain.draws.data() +
                      static_cast<std::size_t>(i) * static_cast<std::size_t>(chain.dim);
        const double mu = row[0];
        const double tau = std::exp(row[1]);
        for (int j = 2; j < chain.dim; ++j) row[j] = mu + tau * row[j];
        chain.log_joint[static_cast<std::size_t>(i)] =
            model.log_joint(std::span<const double>(row, static_cast<std::size_t>(chain.dim)));
      }
    }
    out.chains.push_back(std::move(chain));
  }

  // Gate quantities: raw coordinates, or predictive-curve values for models
  // whose weight space is not identified.
  if (spec.gate_on_predictive) {
    auto x = model.data->col("x");
    double x_lo = x.front(), x_hi = x.front();
    for (double xi : x) {
      x_lo = std::min(x_lo, xi);
      x_hi = std::max(x_hi, xi);
    }
    constexpr int kGatePoints = 20;
    std::vector<std::vector<std::vector<double>>> quantities(kGatePoints + 1);
    for (int g = 0; g <= kGatePoints; ++g) {
      for (const McmcChain& chain : out.chains) {
        std::vector<double> vals(static_cast<std::size_t>(chain.n_kept));
        for (int i = 0; i < chain.n_kept; ++i) {
          if (g == kGatePoints) {
            vals[static_cast<std::size_t>(i)] =
                chain.log_joint[static_cast<std::size_t>(i)];
          } else {
            const double xg =
                x_lo + (x_hi - x_lo) * static_cast<double>(g) / (kGatePoints - 1);
            vals[static_cast<std::size_t>(i)] =
                bnn_predictive_mean(chain.row(static_cast<std::size_t>(i)), xg);
          }
        }
        quantities[static_cast<std::size_t>(g)].push_back(std::move(vals));
      }
    }
    out.diagnostics = chain_diagnostics_scalar(quantities);
  } else {
    out.diagnostics = chain_diagnostics(out.chains);
  }

  // Persist chains (unconstrained coordinates plus log-joint).
  for (std::size_t c = 0; c < out.chains.size(); ++c) {
    const McmcChain& chain = out.chains[c];
    std::vector<std::string> header = model.param_names;
    for (std::string& h : header) h = "u_" + h;
    header.push_back("log_joint");
    std::vector<std::vector<double>> cols(header.size());
    for (int j = 0; j < chain.dim; ++j) {
      cols[static_cast<std::size_t>(j)] = chain.column(j);
    }
    cols.back() = chain.log_joint;
    write_csv(config.out_dir / ("chain_" + std::to_string(c) + ".csv"), header,
              cols);
  }

  // Pooled constrained draws for comparisons.
  {
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(model.dim));
    for (const McmcChain& chain : out.chains) {
      for (int i = 0; i < chain.n_kept; ++i) {
        const std::vector<double> con =
            model.constrain(chain.row(static_cast<std::size_t>(i)));
        for (int j = 0; j < model.dim; ++j) {
          cols[static_cast<std::size_t>(j)].push_back(
              con[static_cast<std::size_t>(j)]);
        }
      }
    }
    write_csv(config.out_dir / "samples.csv", model.param_names, cols);
  }

  out.gate_passed = out.diagnostics.max_rhat < 1.01;
  json diag;
  diag["experiment"] = config.experiment;
  diag["n_chains"] = n_chains;
  diag["n_kept"] = n_kept;
  diag["n_warmup"] = n_warmup;
  diag["thinning"] = thinning;
  diag["seed"] = config.train.seed;
  diag["split_rhat"] = out.diagnostics.split_rhat;
  diag["ess"] = out.diagnostics.ess;
  diag["max_rhat"] = out.diagnostics.max_rhat;
  diag["gate_on_predictive"] = spec.gate_on_predictive;
  diag["ground_truth_ready"] = out.gate_passed;
  double acc = 0.0;
  for (const McmcChain& c : out.chains) acc += c.acceptance_rate;
  diag["mean_acceptance"] = acc / static_cast<double>(n_chains);
  write_text_atomic(config.out_dir / "diagnostics.json", diag.dump(2) + "\n");

  if (!out.gate_passed) {
    throw GateError("mcmc: split-Rhat gate failed (max " +
                    std::to_string(out.diagnostics.max_rhat) + " >= 1.01)");
  }
  return out;
}

// --- run_sweep_m ----------------------------------------------------------------------

std::vector<SweepRow> run_sweep_m(const ExperimentConfig& config,
                                  std::span<const int> m_list, int replicates) {
  config.validate();
  const ExperimentSpec& spec = experiment_registry().at(config.experiment);
  if (!spec.analytic_kl && !spec.evidence_quadrature) {
    throw ConfigError("sweep-m: experiment '" + config.experiment +
                      "' has no analytic or quadrature evidence");
  }
  const ProbabilisticModel model = make_experiment_model(
      config.experiment, config.data_dir, config.data_override);

  std::optional<BetaDistribution> analytic;
  double log_z = 0.0;
  if (spec.analytic_kl && config.experiment == "bernoulli") {
    analytic = analytic_beta_posterior(1.1, 1.1, model.data->col("y"));
  } else {
    log_z = log_evidence_quadrature_1d(model, spec.quad_lo, spec.quad_hi,
                                       spec.quad_nodes);
  }

  std::vector<SweepRow> rows;
  for (int m : m_list) {
    for (int rep = 0; rep < replicates; ++rep) {
      TrainConfig tc = config.train;
      tc.order = m;
      tc.seed = config.train.seed + 1000003ULL * static_cast<std::uint64_t>(m) +
                static_cast<std::uint64_t>(rep);
      const FitResult fit = train(model, FamilyKind::bernstein_flow, tc);
      Rng kl_rng(tc.seed ^ 0x517cc1b727220a95ULL);
      double kl = 0.0;
      if (analytic) {
        kl = kl_vs_analytic(
            fit.family,
            [&](std::span<const double> th) {
              return analytic->log_pdf_unconstrained(th[0]);
            },
            10000, kl_rng);
      } else {
        kl = kl_via_evidence(fit.family, model, log_z, 10000, kl_rng);
      }
      rows.push_back({m, rep, tc.seed, kl});
    }
  }

  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    std::vector<std::vector<double>> cols(4);
    for (const SweepRow& r : rows) {
      cols[0].push_back(r.order);
      cols[1].push_back(r.replicate);
      cols[2].push_back(static_cast<double>(r.seed));
      cols[3].push_back(r.kl);
    }
    const std::vector<std::string> header = {"M", "replicate", "seed", "KL"};
    write_csv(config.out_dir / "sweep.csv", header, cols);
  }
  return rows;
}

// --- run_compare ----------------------------------------------------------------------

namespace {

struct MarginalStats {
  double mean, sd, skew;
};

MarginalStats marginal_stats(std::span<const double> v) {
  return {num::mean(v), num::sd(v), num::skewness(v)};
}

}  // namespace

CompareOutput run_compare(const ExperimentConfig& config,
                          std::span<const std::string> run_dirs,
                          const std::string& against) {
  config.validate();
  const ProbabilisticModel model = make_experiment_model(
      config.experiment, config.data_dir, config.data_override);

  // Reference samples in constrained space.
  std::vector<std::string> ref_header;
  std::vector<std::vector<double>> ref_cols;
  if (against == "analytic") {
    if (config.experiment != "bernoulli") {
      throw ConfigError("compare: --against analytic requires the conjugate "
                        "bernoulli experiment");
    }
    const BetaDistribution post =
        analytic_beta_posterior(1.1, 1.1, model.data->col("y"));
    Rng rng(config.train.seed ^ 0xabcdef12345ULL);
    std::vector<double> draws(20000);
    for (double& d : draws) d = post.sample(rng);
    ref_header = model.param_names;
    ref_cols.push_back(std::move(draws));
  } else {
    const fs::path ref_samples = fs::path(against) / "samples.csv";
    if (!fs::exists(ref_samples)) {
      throw ConfigError("compare: missing reference run " + ref_samples.string());
    }
    ref_cols = read_csv_columns(ref_samples, ref_header);
  }

  json report;
  report["experiment"] = config.experiment;
  report["against"] = against;
  json runs = json::array();

  fs::create_directories(config.out_dir);
  {
    std::vector<std::string> hdr(ref_header.begin(), ref_header.end());
    write_csv(config.out_dir / "pairs_reference.csv", hdr, ref_cols);
  }

  for (const std::string& dir : run_dirs) {
    const fs::path samples_path = fs::path(dir) / "samples.csv";
    if (!fs::exists(samples_path)) {
      throw ConfigError("compare: missing run " + samples_path.string());
    }
    std::vector<std::string> header;
    const std::vector<std::vector<double>> cols =
        read_csv_columns(samples_path, header);

    json entry;
    entry["run"] = dir;
    const fs::path report_path = fs::path(dir) / "report.json";
    if (fs::exists(report_path)) {
      const json run_report = json::parse(read_file(report_path));
      if (run_report.contains("k_hat")) entry["k_hat"] = run_report["k_hat"];
      if (run_report.contains("kl_vs_analytic")) {
        entry["kl"] = run_report["kl_vs_analytic"];
      }
      if (run_report.contains("kl_via_evidence")) {
        entry["kl"] = run_report["kl_via_evidence"];
      }
      if (run_report.contains("method")) entry["method"] = run_report["method"];
    }

    json deltas = json::array();
    for (int j = 0; j < model.dim; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const MarginalStats run_stats = marginal_stats(cols[ju]);
      const MarginalStats ref_stats = marginal_stats(ref_cols[ju]);
      json dj;
      dj["param"] = model.param_names[ju];
      dj["mean_delta"] = run_stats.mean - ref_stats.mean;
      dj["sd_delta"] = run_stats.sd - ref_stats.sd;
      dj["skew_delta"] = run_stats.skew - ref_stats.skew;
      deltas.push_back(dj);
    }
    entry["marginal_deltas"] = deltas;
    runs.push_back(entry);

    // Overlay pairs data for plotting.
    const std::string tag = fs::path(dir).filename().string();
    write_csv(config.out_dir / ("pairs_" + tag + ".csv"), header, cols);
  }
  report["runs"] = runs;

  CompareOutput out;
  out.report_path = config.out_dir / "compare.json";
  write_text_atomic(out.report_path, report.dump(2) + "\n");
  return out;
}

}  // namespace bfvi

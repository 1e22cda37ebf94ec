// Command-line harness: fit, sweep-m, mcmc, and compare subcommands over the
// experiment registry. Exit codes: 0 success, 2 configuration error,
// 3 training divergence, 4 reference-chain gate failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bfvi/harness.hpp"

namespace {

using bfvi::ConfigError;

// key=value lines, or a flat JSON object mirroring the flags.
std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string content = ss.str();
  const std::size_t first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '{') {
    const nlohmann::json j = nlohmann::json::parse(content);
    for (const auto& [key, value] : j.items()) {
      if (value.is_string()) {
        out[key] = value.get<std::string>();
      } else {
        out[key] = value.dump();
      }
    }
    return out;
  }
  std::string line;
  std::istringstream lines(content);
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config file: expected key=value, got: " + line);
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const std::size_t b = s.find_first_not_of(" \t\r");
      const std::size_t e = s.find_last_not_of(" \t\r");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    out[key] = value;
  }
  return out;
}

struct CommonFlags {
  std::string experiment;
  std::string method = "bfvi";
  std::string config_file;
  int order = -1;
  int mc_samples = -1;
  int epochs = -1;
  double lr = -1.0;
  std::int64_t seed = -1;
  int batch = -1;
  int s_diag = -1;
  std::string out_dir;
  std::string data_dir;
  std::string data_override;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool with_method) {
  cmd->add_option("--experiment", f.experiment, "experiment name")->required();
  if (with_method) {
    cmd->add_option("--method", f.method, "bfvi | mfgauss");
  }
  cmd->add_option("--config", f.config_file,
                  "config file (key=value lines or a JSON object)");
  cmd->add_option("--M", f.order, "Bernstein order");
  cmd->add_option("--S", f.mc_samples, "MC samples per step");
  cmd->add_option("--epochs", f.epochs, "training steps");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--batch", f.batch, "likelihood minibatch size (0 = full)");
  cmd->add_option("--s-diag", f.s_diag, "diagnostic sample count");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--data-dir", f.data_dir, "bundled data directory");
  cmd->add_option("--data", f.data_override, "dataset path override");
}

bfvi::ExperimentConfig build_config(const CLI::App* cmd, const CommonFlags& f) {
  std::map<std::string, std::string> flags;
  auto set_if = [&](const char* flag, const char* key, const std::string& v) {
    if (cmd->count(flag) > 0) flags[key] = v;
  };
  set_if("--M", "M", std::to_string(f.order));
  set_if("--S", "S", std::to_string(f.mc_samples));
  set_if("--epochs", "epochs", std::to_string(f.epochs));
  set_if("--lr", "lr", std::to_string(f.lr));
  set_if("--seed", "seed", std::to_string(f.seed));
  set_if("--batch", "batch", std::to_string(f.batch));
  set_if("--s-diag", "s-diag", std::to_string(f.s_diag));
  set_if("--out", "out", f.out_dir);
  set_if("--data-dir", "data-dir", f.data_dir);
  set_if("--data", "data", f.data_override);
  return bfvi::resolve_config(f.experiment, f.method,
                              load_config_file(f.config_file), flags);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated integer list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bernstein-flow variational inference benchmark harness"};
  app.require_subcommand(1);

  CommonFlags fit_flags;
  CLI::App* fit_cmd = app.add_subcommand("fit", "train one experiment");
  add_common_flags(fit_cmd, fit_flags, true);

  CommonFlags sweep_flags;
  std::string m_list_csv = "1,2,5,10,20,30,50";
  int replicates = 20;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep-m", "KL-vs-order sweep (needs exact evidence)");
  add_common_flags(sweep_cmd, sweep_flags, false);
  sweep_cmd->add_option("--m-list", m_list_csv, "comma-separated orders");
  sweep_cmd->add_option("--replicates", replicates, "replicates per order");

  CommonFlags mcmc_flags;
  int n_chains = 4;
  int n_iters = 20000;
  int n_warmup = -1;
  int thinning = 1;
  CLI::App* mcmc_cmd =
      app.add_subcommand("mcmc", "reference chains with the Rhat gate");
  add_common_flags(mcmc_cmd, mcmc_flags, false);
  mcmc_cmd->add_option("--chains", n_chains, "number of chains (>= 2)");
  mcmc_cmd->add_option("--iters", n_iters, "kept draws per chain");
  mcmc_cmd->add_option("--warmup", n_warmup, "warmup iterations");
  mcmc_cmd->add_option("--thin", thinning, "thinning factor");

  CommonFlags cmp_flags;
  std::string runs_csv;
  std::string against;
  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "comparison report across runs");
  add_common_flags(cmp_cmd, cmp_flags, false);
  cmp_cmd->add_option("--runs", runs_csv, "comma-separated run directories")
      ->required();
  cmp_cmd->add_option("--against", against, "reference: run dir or 'analytic'")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit_cmd->parsed()) {
      const bfvi::ExperimentConfig cfg = build_config(fit_cmd, fit_flags);
      const bfvi::FitRunOutput out = bfvi::run_fit(cfg);
      std::printf("fit %s/%s: elbo=%.4f k_hat=%.3f verdict=%s -> %s\n",
                  cfg.experiment.c_str(), cfg.method.c_str(), out.final_elbo,
                  out.k_hat, out.verdict.c_str(), out.out_dir.string().c_str());
    } else if (sweep_cmd->parsed()) {
      const bfvi::ExperimentConfig cfg = build_config(sweep_cmd, sweep_flags);
      const std::vector<int> m_list = parse_int_list(m_list_csv);
      const auto rows = bfvi::run_sweep_m(cfg, m_list, replicates);
      std::printf("sweep-m %s: %zu rows -> %s/sweep.csv\n",
                  cfg.experiment.c_str(), rows.size(),
                  cfg.out_dir.string().c_str());
    } else if (mcmc_cmd->parsed()) {
      const bfvi::ExperimentConfig cfg = build_config(mcmc_cmd, mcmc_flags);
      const int warm = n_warmup > 0 ? n_warmup : std::max(2000, n_iters / 2);
      const bfvi::McmcRunOutput out =
          bfvi::run_mcmc(cfg, n_chains, n_iters, warm, thinning);
      std::printf("mcmc %s: %d chains, max split-Rhat %.4f -> %s\n",
                  cfg.experiment.c_str(), n_chains, out.diagnostics.max_rhat,
                  out.out_dir.string().c_str());
    } else if (cmp_cmd->parsed()) {
      const bfvi::ExperimentConfig cfg = build_config(cmp_cmd, cmp_flags);
      std::vector<std::string> runs;
      std::stringstream ss(runs_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) runs.push_back(tok);
      }
      if (runs.empty()) throw ConfigError("compare: --runs is empty");
      const bfvi::CompareOutput out = bfvi::run_compare(cfg, runs, against);
      std::printf("compare %s -> %s\n", cfg.experiment.c_str(),
                  out.report_path.string().c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const bfvi::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const bfvi::TrainingError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 3;
  } catch (const bfvi::GateError& e) {
    std::fprintf(stderr, "gate failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

// Stochastic ELBO maximization: reparameterized Monte-Carlo ELBO estimates,
// an RMSprop training loop, posterior sampling, and the variational families
// (1D sandwich flow, masked autoregressive Bernstein flow, mean-field
// Gaussian baseline).

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bfvi/maf.hpp"
#include "bfvi/models.hpp"
#include "bfvi/rng.hpp"
#include "bfvi/sandwich_flow.hpp"
#include "bfvi/tape.hpp"

namespace bfvi {

struct TrainingError : std::runtime_error {
  TrainingError(int index_, const std::string& what)
      : std::runtime_error(what), index(index_) {}
  int index;  // step during training, sample index during estimation
};

class MeanFieldGaussian {
 public:
  explicit MeanFieldGaussian(int dim);

  int dim() const { return dim_; }
  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  void transform(std::span<const double> z, std::span<double> theta,
                 double& log_q) const;

  struct Traced {
    std::vector<ad::Var> theta;
    ad::Var log_q;
  };
  Traced transform_traced(std::span<const ad::Var> lambda,
                          std::span<const double> z) const;

 private:
  int dim_;
  ad::ParamVector params_;  // slices: mean, log_sd
};

enum class FamilyKind { bernstein_flow, mean_field_gaussian };

FamilyKind family_kind_from_name(std::string_view name);  // "bfvi" | "mfgauss"

namespace detail {
struct SandwichState {
  int order = 0;
  ad::ParamVector params;
};
}  // namespace detail

class VariationalFamily {
 public:
  static VariationalFamily bernstein_1d(int order);
  static VariationalFamily bernstein_mv(int dim, int order,
                                        std::uint64_t init_seed);
  static VariationalFamily mean_field(int dim);

  int dim() const;
  std::string kind_name() const;
  ad::ParamVector& params();
  const ad::ParamVector& params() const;

  // theta(z) in unconstrained space plus log q(theta) under the family.
  void transform(std::span<const double> z, std::span<double> theta,
                 double& log_q) const;

  // Per-step traced state shared by all samples (the reparameterized
  // coefficient chain of the 1D flow; empty otherwise).
  struct Prestep {
    std::vector<ad::Var> derived;
  };
  Prestep prestep_traced(std::span<const ad::Var> lambda) const;

  struct Traced {
    std::vector<ad::Var> theta;
    ad::Var log_q;
  };
  Traced transform_traced(std::span<const ad::Var> lambda, const Prestep& pre,
                          std::span<const double> z) const;

  // Double-path views (throw std::bad_variant_access on kind mismatch).
  SandwichFlow sandwich() const;
  const MultivariateBernsteinFlow& maf() const;
  const MeanFieldGaussian& mean_field_gaussian() const;

  VariationalFamily() = default;

 private:
  using Flow1D = detail::SandwichState;
  std::variant<Flow1D, MultivariateBernsteinFlow, MeanFieldGaussian> impl_;
};

// Spec-named alias for the baseline factory.
VariationalFamily mean_field_gaussian_family(int dim);

// S i.i.d. standard-normal base vectors, flattened row-major (S x dim).
std::vector<double> draw_base(int dim, int S, Rng& rng);

struct TrainConfig {
  int order = 10;        // Bernstein order M
  int mc_samples = 100;  // S per step
  int epochs = 1000;
  double lr = 1e-3;
  double rms_decay = 0.9;
  double rms_eps = 1e-7;
  std::uint64_t seed = 0;
  int batch_size = 0;  // 0 = full batch; otherwise likelihood scaled by N/batch
};

struct ElboEstimate {
  double elbo;
  double expected_log_lik;
  double kl_term;  // (1/S) sum [log q - log p_prior]
};

ElboEstimate estimate_elbo(const VariationalFamily& family,
                           const ProbabilisticModel& model, int S, Rng& rng);
ElboEstimate estimate_elbo_fixed(const VariationalFamily& family,
                                 const ProbabilisticModel& model,
                                 std::span<const double> z_bank);

// Traced negative-free-energy objective over a fixed base bank; the trainer
// and the gradient tests share this path.
ad::Var elbo_objective_traced(ad::Tape& tape, std::span<const ad::Var> leaves,
                              const VariationalFamily& family,
                              const ProbabilisticModel& model,
                              std::span<const double> z_bank, RowSubset rows,
                              double lik_scale);

struct FitResult {
  VariationalFamily family;
  std::vector<double> elbo_trace;          // one entry per epoch
  std::vector<std::int32_t> clipped_steps; // steps where the norm clip fired
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

FitResult train(const ProbabilisticModel& model, FamilyKind kind,
                const TrainConfig& config);

struct SampleBank {
  int dim = 0;
  std::vector<double> z;      // n x dim
  std::vector<double> theta;  // n x dim, unconstrained
  std::vector<double> log_q;  // n

  std::size_t size() const { return log_q.size(); }
  std::span<const double> theta_row(std::size_t i) const {
    return {theta.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> z_row(std::size_t i) const {
    return {z.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
};

SampleBank sample_posterior(const VariationalFamily& family, int n, Rng& rng);

// Window-mean trend check used for converged-training gates: consecutive
// non-overlapping window means over the final `frac` of the trace may not
// drop by more than `z_tol` standard errors of the difference.
bool smoothed_trace_nondecreasing(std::span<const double> trace,
                                  int window = 100, double frac = 0.5,
                                  double z_tol = 4.0);

}  // namespace bfvi

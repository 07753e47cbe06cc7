#pragma once

// Experiment harness: built-in integrands, estimator ladders over k,
// replicate batches and the CSV they produce.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cubstrat/estimators.hpp"
#include "cubstrat/transform.hpp"

namespace cubstrat {

/// Sum of coef * prod_i u_i^exps_i.
struct Polynomial {
    struct Term {
        double coef = 0.0;
        std::vector<int> exps;
    };
    int s = 1;
    std::vector<Term> terms;

    double operator()(std::span<const double> u) const;
    double derivative(std::span<const double> u, std::span<const int> alpha) const;
    double integral() const;  ///< over [0,1]^s
    int degree() const;
};

struct BenchIntegrand {
    std::string name;
    int s = 1;
    Integrand f;
    std::optional<double> exact;
    DerivativeOracle oracle;  ///< empty when no analytic derivatives exist
    bool vanishing = false;   ///< f and its derivatives vanish on the boundary
};

/// f_1(u) = u e^u (integral 1); for s >= 2, f_s(u) = (prod_j u_j^(j-1))
/// exp(prod_j u_j) with integral e - sum_{j<s} 1/j!. Derivatives are supplied for s = 1.
BenchIntegrand test_function(int s);

/// sup_u |f_1^(r)(u)| = (1 + r) e.
double test_function_norm(int r);

/// Fixed degree-2 polynomial with every monomial present.
BenchIntegrand quadratic_integrand(int s);

/// Standard normal density on R^s pushed through the psi transform (integral 1).
BenchIntegrand wrapped_gaussian(int s, double tau = default_tau);

/// prod_i (u_i (1 - u_i))^p: a polynomial vanishing on the boundary to order p - 1.
BenchIntegrand bump(int s, int p);

struct LogisticData {
    std::vector<std::vector<double>> predictors;  ///< one row per observation
    std::vector<double> labels;                   ///< in {-1, 1}
};

/// Header row required. label_column < 0 means the last column; every other
/// column is a predictor in file order. Labels in {0,1} are mapped to {-1,1}.
LogisticData read_logistic_csv(const std::string& path, int label_column = -1, bool standardize = false);

/// log prior + log likelihood for beta in R^s: intercept plus the first s - 1
/// predictors, prior N(0, prior_sd^2 I).
LogDensity logistic_log_posterior(const LogisticData& data, int s, double prior_sd = 5.0);

struct LogisticOptions {
    explicit LogisticOptions(ScaleConvention convention) : scale(convention) {}
    ScaleConvention scale;
    double prior_sd = 5.0;
    double tau = default_tau;
    int label_column = -1;
    bool standardize = false;
};

/// Marginal likelihood integrand on [0,1]^s via the Laplace-centred transform.
BenchIntegrand logistic_marginal_likelihood(const LogisticData& data, int s, const LogisticOptions& options);

enum class RelMode {
    automatic,    ///< mse when the exact integral is known, var otherwise
    mse,          ///< MSE / I^2
    mse_literal,  ///< MSE / |I|
    var,          ///< sample variance / mean^2
};

RelMode parse_rel_mode(const std::string& name);
std::string to_string(RelMode mode);

inline constexpr double discard_threshold = 1e-32;

struct ExperimentConfig {
    std::string fn = "fs";
    int dim = 1;
    std::vector<Variant> variants{Variant::haber1};
    std::vector<int> r_values{1};
    std::vector<int> k_values{4, 8, 16};
    int reps = 50;
    std::uint64_t seed = 1;
    double tau = default_tau;
    RelMode rel_mode = RelMode::automatic;
    bool block_stencils = false;
    int threads = 1;
    int bump_power = 4;
    std::string dataset;
    std::optional<ScaleConvention> scale;  ///< required for the logistic workload
    double prior_sd = 5.0;
    int label_column = -1;
    bool standardize = false;
};

struct ResultRow {
    std::string variant;
    int r = 0;
    int k = 0;
    double n_evals = 0.0;  ///< mean calls reaching f per replicate
    double rel_error = 0.0;
    bool discarded = false;
    std::string slope_group;
    double mean = 0.0;  ///< mean estimate over replicates
    double stderr_mean = 0.0;
};

/// Integrand named by config.fn: fs, poly, gauss, bump or logistic.
BenchIntegrand make_integrand(const ExperimentConfig& config);

/// Stream seed for one (variant, r, k) cell; replicates use ids 0..reps-1.
std::uint64_t cell_seed(std::uint64_t master, Variant variant, int r, int k);

/// One row per (variant, r, k) in that order. Cells whose k is too small for
/// the stencil window are skipped.
std::vector<ResultRow> run(const ExperimentConfig& config);

/// Least-squares slope of log(rel_error) against log(n_evals) over the
/// non-discarded rows. Throws DomainError with fewer than three rows.
double fit_slope(const std::vector<ResultRow>& rows);

inline const char* csv_header = "variant,r,k,n_evals,rel_error,discarded,slope_group";

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_csv(std::istream& in);

}  // namespace cubstrat

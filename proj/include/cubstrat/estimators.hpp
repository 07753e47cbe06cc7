#pragma once

// Unbiased integral estimators on the cubic stratification.
//
// Every stratified estimator is assembled the same way: a list of partial
// averages A_j = k^-s * sum_c (random evaluation in stratum c), each reduced
// with a fixed-tree pairwise sum over centres in lexicographic order, mixed as
// sum_j gamma_j A_j, minus the averaged control variate, and rounded to double
// once at the end. Variants that are mathematically identical therefore
// produce identical bits.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cubstrat/lattice.hpp"
#include "cubstrat/rng.hpp"
#include "cubstrat/stencil.hpp"

namespace cubstrat {

/// f : [0,1]^s -> R. Must be safe to call concurrently when threads > 1.
using Integrand = std::function<double(std::span<const double>)>;

/// D^alpha f(x) for a multi-index alpha.
using DerivativeOracle = std::function<double(std::span<const double> x, std::span<const int> alpha)>;

enum class Variant { crude, haber1, haber2, star, hat, tilde, vanishing };

std::string_view to_string(Variant v) noexcept;
/// Throws DomainError for unknown names.
Variant parse_variant(std::string_view name);

struct EstimateOptions {
    bool block_stencils = false;  ///< stencils restricted to the centre's block
    bool keep_terms = false;      ///< retain per-stratum terms for variance estimation
    int threads = 1;
};

struct EstimateReport {
    Variant variant = Variant::crude;
    int r = 0;
    double value = 0.0;
    std::size_t n_deterministic = 0;  ///< evaluations at centres
    std::size_t n_random = 0;         ///< evaluations at random points (nominal for vanishing)
    std::size_t n_in_domain = 0;      ///< calls that actually reached f
    /// Y_i with value = sum_i Y_i / normalizer (up to rounding), if retained.
    std::vector<double> per_stratum_terms;
    double normalizer = 1.0;
    /// A_j of the vanishing estimator, one per lambda.
    std::vector<double> partial_averages;

    std::size_t n_evaluations() const noexcept { return n_deterministic + n_random; }
};

/// Dilations lambda = (1, -1, 3, -3, ...) and weights gamma with
/// sum_j gamma_j lambda_j^i = [i == 0] for i < r.
struct LambdaCoefficients {
    std::vector<int> lambdas;
    std::vector<double> gammas;
    int margin = 0;  ///< m_r
};

/// E[V^i] for V uniform on [-1/2k, 1/2k].
double d_moment(int i, int k);

LambdaCoefficients lambda_coeffs(int r);

/// m_r = r for odd r, r - 1 for even r.
int vanishing_margin(int r);

/// Grid with the margin the vanishing estimator of order r expects.
GridSpec vanishing_grid(int s, int k, int r);

/// Stencil window used by the hat estimator: r rounded up to even, so that
/// orders 2q - 1 and 2q share every stencil.
int hat_stencil_order(int r);

EstimateReport crude(const Integrand& f, int s, std::size_t n, const StreamKey& stream,
                     const EstimateOptions& options = {});

EstimateReport haber1(const Integrand& f, const GridSpec& grid, const StreamKey& stream,
                      const EstimateOptions& options = {});

EstimateReport haber2(const Integrand& f, const GridSpec& grid, const StreamKey& stream,
                      const EstimateOptions& options = {});

/// Haber II plus the exact even-order Taylor control variate built from oracle
/// derivatives at the centres.
EstimateReport estimate_star(const Integrand& f, const DerivativeOracle& oracle, int r, const GridSpec& grid,
                             const StreamKey& stream, const EstimateOptions& options = {});

/// Symmetric pair per stratum plus even-order stencil control variates. Uses
/// k^s centre evaluations shared by every stencil. Needs k >= hat_stencil_order(r).
EstimateReport estimate_hat(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                            const EstimateOptions& options = {});

/// One random point per stratum, control variates of every order 1..r-1.
EstimateReport estimate_tilde(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                              const EstimateOptions& options = {});

/// Per-dilation evaluations of the vanishing estimator of order r: values[j]
/// holds g(c + lambda_j U_c) over the centres of grids[j], the grid with the
/// smallest margin (|lambda_j| - 1) / 2 that keeps that sum unbiased.
struct VanishingPartials {
    LambdaCoefficients coeffs;
    std::vector<GridSpec> grids;
    std::vector<std::vector<double>> values;
    std::vector<long double> averages;  ///< A_j, kept in extended precision
    std::size_t in_domain = 0;
};

/// sum_j gamma_j A_j accumulated in extended precision and rounded once; the
/// single mixing rule shared by every stratified estimator.
double combine_partials(std::span<const double> gammas, std::span<const long double> partials,
                        long double control = 0.0L);

VanishingPartials vanishing_partials(const Integrand& f, int r, int s, int k, const StreamKey& stream,
                                     int threads = 1);

/// sum_j gamma_j A_j. Requires grid.m == vanishing_margin(r). f is never called
/// outside [0,1]^s; such points count as 0.
EstimateReport estimate_vanishing(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                                  const EstimateOptions& options = {});

/// k^-s sum over every centre of `grid` of g(c + lambda U_c), with g taken as 0
/// outside [0,1]^s. lambda odd and grid.m >= (|lambda| - 1) / 2.
double unbiased_shifted_sum(const Integrand& g, int lambda, const GridSpec& grid, const StreamKey& stream,
                            int threads = 1);

struct EstimatorConfig {
    Variant variant = Variant::haber1;
    int r = 1;
    GridSpec grid;
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
    EstimateOptions options;
    std::size_t crude_samples = 0;  ///< 0 means k^s
};

/// Dispatch on config.variant. `oracle` is required for star only.
EstimateReport estimate(const Integrand& f, const EstimatorConfig& config,
                        const DerivativeOracle* oracle = nullptr);

struct AsymptoticVarianceOptions {
    std::size_t budget = 2000;       ///< joint replicates for the covariance matrix
    std::uint64_t seed = 0;
    int quadrature_points = 0;       ///< per axis for the cross integrals; 0 picks ~2^20 total
};

/// Limit of k^(s+2r) Var(hat estimate) under block stencils, from the covariance
/// of the order-r estimator on monomials (u - 1/2)^alpha at k = r and the
/// integrals of D^alpha f D^alpha' f over |alpha| = |alpha'| = r. Even r only.
double asymptotic_variance_estimate(int s, const DerivativeOracle& oracle, int r,
                                    const AsymptoticVarianceOptions& options = {});

}  // namespace cubstrat

#pragma once

// Change of variables from R^s to the unit cube.
//
// psi(u)_i = (2u_i - 1) / (u_i^tau (1 - u_i)^tau) maps (0,1)^s onto R^s. For g
// decaying fast enough, f(u) = g(psi(u)) * prod_i psi'(u_i) vanishes with its
// derivatives on the boundary and integrates to the integral of g over R^s.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cubstrat/estimators.hpp"

namespace cubstrat {

inline constexpr double default_tau = 1.5;

/// Componentwise psi. Throws DomainError unless every u_i is in (0, 1).
std::vector<double> psi(std::span<const double> u, double tau = default_tau);

/// prod_i psi'(u_i) with psi'(u) = 2/(u(1-u))^tau + tau (2u-1)^2 / (u(1-u))^(tau+1).
double jacobian_factor(std::span<const double> u, double tau = default_tau);

/// u -> g(psi(u)) jacobian_factor(u), exactly 0 when some u_i is 0 or 1 (or
/// outside the cube) and when g itself returns 0. Non-finite g values raise
/// EvaluationError.
Integrand wrap(Integrand g, double tau = default_tau);

enum class ScaleConvention {
    cholesky_of_hessian,          ///< L L^T = -Hessian of h at the mode
    cholesky_of_inverse_hessian,  ///< L L^T = (-Hessian)^-1, the usual Laplace scaling
};

/// Log-density h with optional analytic derivatives. Missing derivatives are
/// approximated by central differences.
struct LogDensity {
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> gradient;  ///< writes s entries
    std::function<void(std::span<const double>, std::span<double>)> hessian;   ///< writes s*s, row-major
};

struct LaplaceOptions {
    explicit LaplaceOptions(ScaleConvention convention) : scale(convention) {}

    ScaleConvention scale;
    double tau = default_tau;
    double gradient_tolerance = 1e-8;
    int max_iterations = 200;
    /// Evaluate exp(h - h(mode)) inside the integrand so values stay O(1); the
    /// integral is then exp(log_offset) times the estimate.
    bool subtract_peak = false;
};

struct LaplaceResult {
    std::vector<double> mode;
    std::vector<double> scale;  ///< lower-triangular L, row-major s*s
    double log_abs_det = 0.0;   ///< log |det L|
    double peak = 0.0;          ///< h(mode)
    double log_offset = 0.0;    ///< subtracted from h in the integrand
    int iterations = 0;
    Integrand integrand;        ///< u -> exp(h(mode + L psi(u)) - log_offset) |det L| J(u)
};

/// Damped Newton ascent to the mode of h, then the reparametrised integrand.
/// Throws OptimizationError (with the iterate trace) when the search fails or
/// the Hessian at the mode is not negative definite.
LaplaceResult laplace_reparametrize(const LogDensity& h, std::span<const double> mode_guess,
                                    const LaplaceOptions& options);

}  // namespace cubstrat

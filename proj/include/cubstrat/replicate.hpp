#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "cubstrat/estimators.hpp"

namespace cubstrat {

struct OrderResult {
    std::vector<double> values;  ///< estimate per replicate
    double pooled_mean = 0.0;
    double v_hat = 0.0;
};

struct ReplicateSummary {
    std::size_t l = 0;
    double pooled_mean = 0.0;
    double v_hat = 0.0;            ///< estimated variance of a single replicate
    double pooled_variance = 0.0;  ///< v_hat / l
    int selected_order = 0;        ///< set by select_order only
    std::map<int, OrderResult> per_order;
};

/// (1/N^2) sum_i sample-variance_i over replicates of the per-stratum terms,
/// N being the reports' common normalizer. Throws AlignmentError when fewer
/// than two reports are given or their terms do not line up.
double variance_estimate(std::span<const EstimateReport> reports);

/// Mean of the replicate values with v_hat and v_hat / l.
ReplicateSummary pooled(std::span<const EstimateReport> reports);

/// n^(-1/2 - r/s) c_hat norm_r sqrt(2 log(2/delta)). delta in (0, 1).
double tail_bound(double delta, double c_hat, double norm_r, double n, int r, int s);

struct OrderSelection {
    int best_order = 1;
    ReplicateSummary summary;     ///< per_order filled for 1..r_max
    std::size_t evaluations = 0;  ///< calls that reached f, all replicates
};

/// Vanishing estimators of every order 1..r_max from one set of per-dilation
/// sums per replicate (replicate ids first_replicate .. first_replicate+l-1).
/// Picks the order with the smallest v_hat; ties go to the smaller order.
/// f must vanish on the boundary of the cube (not checked).
OrderSelection select_order(const Integrand& f, int r_max, int s, int k, std::size_t l, std::uint64_t seed,
                            std::uint64_t first_replicate = 0, int threads = 1);

}  // namespace cubstrat

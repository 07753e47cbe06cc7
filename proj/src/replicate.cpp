#include "cubstrat/replicate.hpp"

#include <cmath>
#include <string>

#include "cubstrat/errors.hpp"
#include "cubstrat/numeric.hpp"

namespace cubstrat {

namespace {

// Unbiased sample variance of each column, summed, over rows = replicates.
double summed_sample_variance(const std::vector<std::span<const double>>& rows) {
    const std::size_t l = rows.size();
    const std::size_t n = rows.front().size();
    std::vector<double> per(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& row : rows) mean += row[i];
        mean /= static_cast<double>(l);
        double ss = 0.0;
        for (const auto& row : rows) ss += (row[i] - mean) * (row[i] - mean);
        per[i] = ss / static_cast<double>(l - 1);
    }
    return pairwise_sum(per);
}

double mean_of(std::span<const double> v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

}  // namespace

double variance_estimate(std::span<const EstimateReport> reports) {
    if (reports.size() < 2) throw AlignmentError("variance estimation needs at least two replicates");
    const auto& first = reports.front();
    if (first.per_stratum_terms.empty()) throw AlignmentError("per-stratum terms were not retained");
    std::vector<std::span<const double>> rows;
    for (const auto& rep : reports) {
        if (rep.variant != first.variant || rep.r != first.r || rep.normalizer != first.normalizer ||
            rep.per_stratum_terms.size() != first.per_stratum_terms.size()) {
            throw AlignmentError("replicates come from different configurations");
        }
        rows.emplace_back(rep.per_stratum_terms);
    }
    return summed_sample_variance(rows) / (first.normalizer * first.normalizer);
}

ReplicateSummary pooled(std::span<const EstimateReport> reports) {
    ReplicateSummary out;
    out.v_hat = variance_estimate(reports);
    out.l = reports.size();
    std::vector<double> values;
    for (const auto& rep : reports) values.push_back(rep.value);
    out.pooled_mean = mean_of(values);
    out.pooled_variance = out.v_hat / static_cast<double>(out.l);
    return out;
}

double tail_bound(double delta, double c_hat, double norm_r, double n, int r, int s) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (s < 1 || r < 1 || !(n > 0.0)) throw DomainError("tail bound needs n > 0, r >= 1, s >= 1");
    return std::pow(n, -0.5 - static_cast<double>(r) / s) * c_hat * norm_r * std::sqrt(2.0 * std::log(2.0 / delta));
}

OrderSelection select_order(const Integrand& f, int r_max, int s, int k, std::size_t l, std::uint64_t seed,
                            std::uint64_t first_replicate, int threads) {
    if (l < 2) throw DomainError("order selection needs at least two replicates");
    if (r_max < 1) throw OrderError("r_max must be at least 1");
    const GridSpec outer = vanishing_grid(s, k, r_max);
    const double norm = std::pow(static_cast<double>(k), s);

    std::vector<VanishingPartials> runs;
    runs.reserve(l);
    OrderSelection sel;
    for (std::size_t i = 0; i < l; ++i) {
        runs.push_back(vanishing_partials(f, r_max, s, k, StreamKey{seed, first_replicate + i}, threads));
        sel.evaluations += runs.back().in_domain;
    }

    std::vector<int> idx(static_cast<std::size_t>(s));
    std::vector<std::vector<double>> terms(l, std::vector<double>(outer.count()));
    for (int order = 1; order <= r_max; ++order) {
        const auto coeffs = lambda_coeffs(order);
        OrderResult res;
        for (std::size_t i = 0; i < l; ++i) {
            const auto first = std::span<const long double>(runs[i].averages).first(static_cast<std::size_t>(order));
            res.values.push_back(combine_partials(coeffs.gammas, first));
            auto& t = terms[i];
            std::fill(t.begin(), t.end(), 0.0);
            for (int j = 0; j < order; ++j) {
                const auto& sub = runs[i].grids[static_cast<std::size_t>(j)];
                const auto& vals = runs[i].values[static_cast<std::size_t>(j)];
                const double gamma = coeffs.gammas[static_cast<std::size_t>(j)];
                for (std::size_t c = 0; c < sub.count(); ++c) {
                    unflatten(sub, c, idx);
                    t[flatten(outer, idx)] += gamma * vals[c];
                }
            }
        }
        std::vector<std::span<const double>> rows(terms.begin(), terms.end());
        res.v_hat = summed_sample_variance(rows) / (norm * norm);
        res.pooled_mean = mean_of(res.values);
        sel.summary.per_order.emplace(order, std::move(res));
    }

    int best = 1;
    for (const auto& [order, res] : sel.summary.per_order) {
        if (res.v_hat < sel.summary.per_order.at(best).v_hat) best = order;
    }
    const auto& chosen = sel.summary.per_order.at(best);
    sel.best_order = best;
    sel.summary.selected_order = best;
    sel.summary.l = l;
    sel.summary.pooled_mean = chosen.pooled_mean;
    sel.summary.v_hat = chosen.v_hat;
    sel.summary.pooled_variance = chosen.v_hat / static_cast<double>(l);
    return sel;
}

}  // namespace cubstrat

#include "cubstrat/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cubstrat/errors.hpp"
#include "cubstrat/numeric.hpp"

namespace cubstrat {

namespace {

double int_pow(double x, int e) {
    double p = 1.0;
    for (int i = 0; i < e; ++i) p *= x;
    return p;
}

std::size_t ipow(int base, int e) {
    std::size_t p = 1;
    for (int i = 0; i < e; ++i) p *= static_cast<std::size_t>(base);
    return p;
}

void require_plain_grid(const GridSpec& grid, const char* who) {
    if (grid.m != 0) throw PreconditionError(std::string(who) + " requires a grid without margin");
}

bool inside_unit_cube(std::span<const double> x) {
    for (double v : x) {
        if (v < 0.0 || v > 1.0) return false;
    }
    return true;
}

struct ControlTerm {
    MultiIndex alpha;
    double inv_factorial = 1.0;
    double centred_moment = 0.0;  // prod_j d_k(alpha_j)
};

std::vector<ControlTerm> control_terms(int s, int k, int min_order, int max_order, bool even_only) {
    std::vector<ControlTerm> out;
    for (int order = min_order; order <= max_order; ++order) {
        if (even_only && order % 2 != 0) continue;
        for (auto& a : multi_indices(s, order)) {
            ControlTerm t;
            t.inv_factorial = 1.0 / a.factorial();
            t.centred_moment = 1.0;
            for (int ai : a.alpha) t.centred_moment *= d_moment(ai, k);
            t.alpha = std::move(a);
            out.push_back(std::move(t));
        }
    }
    return out;
}

// U^alpha - E[U^alpha]
double centred_monomial(const ControlTerm& t, std::span<const double> u) {
    double p = 1.0;
    for (std::size_t i = 0; i < u.size(); ++i) p *= int_pow(u[i], t.alpha.alpha[i]);
    return p - t.centred_moment;
}

// Stencil derivatives read straight from a dense table of centre values, with
// no per-node allocation. Mirrors multivariate_stencil's node choice.
class TableDerivatives {
public:
    TableDerivatives(const GridSpec& grid, int order, const StencilMode& mode, std::span<const double> table)
        : grid_(grid), order_(order), mode_(mode), table_(table) {
        strides_.assign(static_cast<std::size_t>(grid.s), 1);
        for (int p = grid.s - 2; p >= 0; --p) {
            strides_[static_cast<std::size_t>(p)] =
                strides_[static_cast<std::size_t>(p) + 1] * static_cast<std::ptrdiff_t>(grid.k);
        }
    }

    double operator()(std::span<const int> idx, const MultiIndex& alpha) const {
        struct Axis {
            const UnivariateStencil* stencil;
            std::ptrdiff_t stride;
        };
        std::array<Axis, 64> axes{};
        std::size_t active = 0;
        int consumed = 0;
        std::ptrdiff_t base = 0;
        for (int p = 0; p < grid_.s; ++p) {
            const auto pu = static_cast<std::size_t>(p);
            base += idx[pu] * strides_[pu];
            const int a = alpha.alpha[pu];
            if (a == 0) continue;
            const int window = order_ - consumed;
            int lo = 0;
            int hi = grid_.k - 1;
            if (mode_.is_block()) {
                const auto& b = mode_.blocks();
                lo = b.axis_start(b.axis_block(idx[pu]));
                hi = lo + b.side() - 1;
            }
            if (hi - lo + 1 < window) {
                throw ResolutionError("window of " + std::to_string(window) + " nodes does not fit the grid");
            }
            const int start = window_start(idx[pu], lo, hi, window);
            axes[active++] = {&cached_window_stencil(start - idx[pu], window, a), strides_[pu]};
            consumed += a;
        }
        const double sum = tensor(axes.data(), active, base);
        return int_pow(static_cast<double>(grid_.k), alpha.order()) * sum;
    }

private:
    template <class AxisT>
    double tensor(const AxisT* axes, std::size_t n, std::ptrdiff_t base) const {
        if (n == 0) return table_[static_cast<std::size_t>(base)];
        const auto& st = *axes[0].stencil;
        double acc = 0.0;
        for (std::size_t t = 0; t < st.size(); ++t) {
            acc += st.weights[t] * tensor(axes + 1, n - 1, base + st.offsets[t] * axes[0].stride);
        }
        return acc;
    }

    GridSpec grid_;
    int order_;
    const StencilMode& mode_;
    std::span<const double> table_;
    std::vector<std::ptrdiff_t> strides_;
};

std::vector<double> centre_table(const Integrand& f, const GridSpec& grid, int threads) {
    std::vector<double> table(grid.count());
    parallel_for(grid.count(), threads, [&](std::size_t i) {
        std::vector<int> idx(static_cast<std::size_t>(grid.s));
        unflatten(grid, i, idx);
        const auto x = centre_point(grid, idx);
        table[i] = f(x);
    });
    return table;
}

// Per-centre control variate: receives the index, the offset U_c and returns
// the amount subtracted from that stratum's term.
using ControlFn = std::function<double(std::span<const int>, std::span<const double>)>;

struct PairOutcome {
    std::vector<double> plus;
    std::vector<double> minus;
    std::vector<double> control;
};

// f(c + U_c) (and f(c - U_c) when symmetric) for every centre of an m = 0 grid.
PairOutcome stratified_pass(const Integrand& f, const GridSpec& grid, const StreamKey& stream, bool symmetric,
                            const ControlFn* control, int threads) {
    const std::size_t n = grid.count();
    PairOutcome out;
    out.plus.resize(n);
    if (symmetric) out.minus.resize(n);
    if (control) out.control.resize(n);
    const auto s = static_cast<std::size_t>(grid.s);
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<int> idx(s);
        std::vector<double> u(s);
        std::vector<double> x(s);
        unflatten(grid, i, idx);
        sample_offset(grid, idx, stream, u);
        for (std::size_t p = 0; p < s; ++p) x[p] = grid.coordinate(idx[p]) + u[p];
        out.plus[i] = f(x);
        if (symmetric) {
            for (std::size_t p = 0; p < s; ++p) x[p] = grid.coordinate(idx[p]) - u[p];
            out.minus[i] = f(x);
        }
        if (control) out.control[i] = (*control)(idx, u);
    });
    return out;
}

EstimateReport assemble(Variant variant, int r, const GridSpec& grid, const PairOutcome& pass, bool keep_terms) {
    EstimateReport rep;
    rep.variant = variant;
    rep.r = r;
    const double norm = static_cast<double>(grid.count());
    rep.normalizer = norm;
    const bool symmetric = !pass.minus.empty();
    const long double lnorm = norm;
    std::vector<long double> partials;
    std::vector<double> gammas;
    if (symmetric) {
        partials = {pairwise_sum_extended(pass.plus) / lnorm, pairwise_sum_extended(pass.minus) / lnorm};
        gammas = {0.5, 0.5};
    } else {
        partials = {pairwise_sum_extended(pass.plus) / lnorm};
        gammas = {1.0};
    }
    const long double control = pass.control.empty() ? 0.0L : pairwise_sum_extended(pass.control) / lnorm;
    rep.value = combine_partials(gammas, partials, control);
    if (keep_terms) {
        rep.per_stratum_terms.resize(pass.plus.size());
        for (std::size_t i = 0; i < pass.plus.size(); ++i) {
            double y = symmetric ? 0.5 * pass.plus[i] + 0.5 * pass.minus[i] : pass.plus[i];
            if (!pass.control.empty()) y -= pass.control[i];
            rep.per_stratum_terms[i] = y;
        }
    }
    const std::size_t per = symmetric ? 2 : 1;
    rep.n_random = per * grid.count();
    return rep;
}

void require_resolution(const GridSpec& grid, int window) {
    if (grid.k < window) {
        throw ResolutionError("k = " + std::to_string(grid.k) + " is below the stencil window " +
                              std::to_string(window));
    }
}

StencilMode make_mode(const GridSpec& grid, int side, bool block) {
    if (!block) return StencilMode::free_nodes();
    return StencilMode::block(block_partition(grid, side));
}

}  // namespace

double combine_partials(std::span<const double> gammas, std::span<const long double> partials,
                        long double control) {
    long double v = 0.0L;
    for (std::size_t j = 0; j < gammas.size(); ++j) v += gammas[j] * partials[j];
    return static_cast<double>(v - control);
}

std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::crude: return "crude";
        case Variant::haber1: return "haber1";
        case Variant::haber2: return "haber2";
        case Variant::star: return "star";
        case Variant::hat: return "hat";
        case Variant::tilde: return "tilde";
        case Variant::vanishing: return "vanishing";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (auto v : {Variant::crude, Variant::haber1, Variant::haber2, Variant::star, Variant::hat, Variant::tilde,
                   Variant::vanishing}) {
        if (to_string(v) == name) return v;
    }
    throw DomainError("unknown estimator variant '" + std::string(name) + "'");
}

double d_moment(int i, int k) {
    if (k < 1) throw DomainError("k must be at least 1");
    if (i < 0) throw DomainError("moment order must be non-negative");
    if (i % 2 != 0) return 0.0;
    return 1.0 / ((i + 1) * int_pow(2.0 * k, i));
}

LambdaCoefficients lambda_coeffs(int r) {
    if (r < 1) throw OrderError("vanishing order must be at least 1");
    LambdaCoefficients out;
    for (int j = 0; j < r; ++j) {
        const int mag = 2 * (j / 2) + 1;
        out.lambdas.push_back(j % 2 == 0 ? mag : -mag);
    }
    // gamma_j = L_j(0): Lagrange basis at the dilations evaluated at zero
    out.gammas = vandermonde_weights(out.lambdas, 0);
    out.margin = vanishing_margin(r);
    return out;
}

int vanishing_margin(int r) {
    if (r < 1) throw OrderError("vanishing order must be at least 1");
    return r % 2 != 0 ? r : r - 1;
}

GridSpec vanishing_grid(int s, int k, int r) { return GridSpec(s, k, vanishing_margin(r)); }

int hat_stencil_order(int r) { return r % 2 == 0 ? r : r + 1; }

EstimateReport crude(const Integrand& f, int s, std::size_t n, const StreamKey& stream,
                     const EstimateOptions& options) {
    if (s < 1) throw DomainError("dimension must be positive");
    if (n < 1) throw DomainError("crude Monte Carlo needs at least one sample");
    std::vector<double> y(n);
    parallel_for(n, options.threads, [&](std::size_t i) {
        Substream sub(stream, i);
        std::vector<double> x(static_cast<std::size_t>(s));
        for (auto& v : x) v = sub.uniform();
        y[i] = f(x);
    });
    EstimateReport rep;
    rep.variant = Variant::crude;
    rep.value = static_cast<double>(pairwise_sum_extended(y) / static_cast<long double>(n));
    rep.normalizer = static_cast<double>(n);
    rep.n_random = n;
    rep.n_in_domain = n;
    if (options.keep_terms) rep.per_stratum_terms = std::move(y);
    return rep;
}

EstimateReport haber1(const Integrand& f, const GridSpec& grid, const StreamKey& stream,
                      const EstimateOptions& options) {
    require_plain_grid(grid, "haber1");
    auto pass = stratified_pass(f, grid, stream, false, nullptr, options.threads);
    auto rep = assemble(Variant::haber1, 1, grid, pass, options.keep_terms);
    rep.n_in_domain = rep.n_random;
    return rep;
}

EstimateReport haber2(const Integrand& f, const GridSpec& grid, const StreamKey& stream,
                      const EstimateOptions& options) {
    require_plain_grid(grid, "haber2");
    auto pass = stratified_pass(f, grid, stream, true, nullptr, options.threads);
    auto rep = assemble(Variant::haber2, 2, grid, pass, options.keep_terms);
    rep.n_in_domain = rep.n_random;
    return rep;
}

EstimateReport estimate_star(const Integrand& f, const DerivativeOracle& oracle, int r, const GridSpec& grid,
                             const StreamKey& stream, const EstimateOptions& options) {
    require_plain_grid(grid, "estimate_star");
    if (r < 1) throw OrderError("smoothness order must be at least 1");
    if (!oracle) throw PreconditionError("estimate_star needs a derivative oracle");
    const auto terms = control_terms(grid.s, grid.k, 2, r - 1, true);
    ControlFn control = [&](std::span<const int> idx, std::span<const double> u) {
        const auto c = centre_point(grid, idx);
        double cv = 0.0;
        for (const auto& t : terms) cv += oracle(c, t.alpha.alpha) * t.inv_factorial * centred_monomial(t, u);
        return cv;
    };
    auto pass = stratified_pass(f, grid, stream, true, &control, options.threads);
    auto rep = assemble(Variant::star, r, grid, pass, options.keep_terms);
    rep.n_in_domain = rep.n_random;
    return rep;
}

EstimateReport estimate_hat(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                            const EstimateOptions& options) {
    require_plain_grid(grid, "estimate_hat");
    if (r < 1) throw OrderError("smoothness order must be at least 1");
    const int order = hat_stencil_order(r);
    const auto terms = control_terms(grid.s, grid.k, 2, r - 1, true);
    PairOutcome pass;
    std::size_t n_det = 0;
    if (terms.empty()) {
        pass = stratified_pass(f, grid, stream, true, nullptr, options.threads);
    } else {
        require_resolution(grid, order);
        const auto mode = make_mode(grid, order, options.block_stencils);
        const auto table = centre_table(f, grid, options.threads);
        n_det = table.size();
        TableDerivatives deriv(grid, order, mode, table);
        ControlFn control = [&](std::span<const int> idx, std::span<const double> u) {
            double cv = 0.0;
            for (const auto& t : terms) cv += deriv(idx, t.alpha) * t.inv_factorial * centred_monomial(t, u);
            return cv;
        };
        pass = stratified_pass(f, grid, stream, true, &control, options.threads);
    }
    auto rep = assemble(Variant::hat, r, grid, pass, options.keep_terms);
    rep.n_deterministic = n_det;
    rep.n_in_domain = rep.n_random + n_det;
    return rep;
}

EstimateReport estimate_tilde(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                              const EstimateOptions& options) {
    require_plain_grid(grid, "estimate_tilde");
    if (r < 1) throw OrderError("smoothness order must be at least 1");
    const auto terms = control_terms(grid.s, grid.k, 1, r - 1, false);
    PairOutcome pass;
    std::size_t n_det = 0;
    if (terms.empty()) {
        pass = stratified_pass(f, grid, stream, false, nullptr, options.threads);
    } else {
        require_resolution(grid, r);
        const auto mode = make_mode(grid, r, options.block_stencils);
        const auto table = centre_table(f, grid, options.threads);
        n_det = table.size();
        TableDerivatives deriv(grid, r, mode, table);
        ControlFn control = [&](std::span<const int> idx, std::span<const double> u) {
            double cv = 0.0;
            for (const auto& t : terms) cv += deriv(idx, t.alpha) * t.inv_factorial * centred_monomial(t, u);
            return cv;
        };
        pass = stratified_pass(f, grid, stream, false, &control, options.threads);
    }
    auto rep = assemble(Variant::tilde, r, grid, pass, options.keep_terms);
    rep.n_deterministic = n_det;
    rep.n_in_domain = rep.n_random + n_det;
    return rep;
}

namespace {

struct ShiftedPass {
    std::vector<double> values;  // lexicographic over the grid's centres
    std::size_t in_domain = 0;
};

ShiftedPass shifted_pass(const Integrand& g, int lambda, const GridSpec& grid, const StreamKey& stream,
                         int threads) {
    ShiftedPass out;
    out.values.resize(grid.count());
    std::vector<unsigned char> called(grid.count(), 0);
    const auto s = static_cast<std::size_t>(grid.s);
    const double lam = lambda;
    parallel_for(grid.count(), threads, [&](std::size_t i) {
        std::vector<int> idx(s);
        std::vector<double> u(s);
        std::vector<double> x(s);
        unflatten(grid, i, idx);
        sample_offset(grid, idx, stream, u);
        for (std::size_t p = 0; p < s; ++p) x[p] = grid.coordinate(idx[p]) + lam * u[p];
        if (inside_unit_cube(x)) {
            out.values[i] = g(x);
            called[i] = 1;
        } else {
            out.values[i] = 0.0;
        }
    });
    for (auto c : called) out.in_domain += c;
    return out;
}

void check_shift(int lambda, const GridSpec& grid) {
    if (lambda % 2 == 0) throw PreconditionError("dilation must be odd");
    if (2 * grid.m < std::abs(lambda) - 1) {
        throw PreconditionError("margin " + std::to_string(grid.m) + " is too small for dilation " +
                                std::to_string(lambda));
    }
}

}  // namespace

double unbiased_shifted_sum(const Integrand& g, int lambda, const GridSpec& grid, const StreamKey& stream,
                            int threads) {
    check_shift(lambda, grid);
    const auto pass = shifted_pass(g, lambda, grid, stream, threads);
    return static_cast<double>(pairwise_sum_extended(pass.values) / static_cast<long double>(ipow(grid.k, grid.s)));
}

VanishingPartials vanishing_partials(const Integrand& f, int r, int s, int k, const StreamKey& stream,
                                     int threads) {
    VanishingPartials out;
    out.coeffs = lambda_coeffs(r);
    const long double norm = static_cast<long double>(ipow(k, s));
    for (int lambda : out.coeffs.lambdas) {
        const GridSpec sub(s, k, (std::abs(lambda) - 1) / 2);
        auto pass = shifted_pass(f, lambda, sub, stream, threads);
        out.averages.push_back(pairwise_sum_extended(pass.values) / norm);
        out.in_domain += pass.in_domain;
        out.grids.push_back(sub);
        out.values.push_back(std::move(pass.values));
    }
    return out;
}

EstimateReport estimate_vanishing(const Integrand& f, int r, const GridSpec& grid, const StreamKey& stream,
                                  const EstimateOptions& options) {
    if (grid.m != vanishing_margin(r)) {
        throw PreconditionError("vanishing estimator of order " + std::to_string(r) + " needs margin " +
                                std::to_string(vanishing_margin(r)));
    }
    auto parts = vanishing_partials(f, r, grid.s, grid.k, stream, options.threads);
    EstimateReport rep;
    rep.variant = Variant::vanishing;
    rep.r = r;
    rep.normalizer = static_cast<double>(ipow(grid.k, grid.s));
    rep.value = combine_partials(parts.coeffs.gammas, parts.averages);
    rep.n_random = static_cast<std::size_t>(r) * grid.count();
    rep.n_in_domain = parts.in_domain;
    if (options.keep_terms) {
        rep.per_stratum_terms.assign(grid.count(), 0.0);
        std::vector<int> idx(static_cast<std::size_t>(grid.s));
        for (std::size_t j = 0; j < parts.values.size(); ++j) {
            const double gamma = parts.coeffs.gammas[j];
            for (std::size_t i = 0; i < parts.grids[j].count(); ++i) {
                unflatten(parts.grids[j], i, idx);
                rep.per_stratum_terms[flatten(grid, idx)] += gamma * parts.values[j][i];
            }
        }
    }
    rep.partial_averages.assign(parts.averages.begin(), parts.averages.end());
    return rep;
}

EstimateReport estimate(const Integrand& f, const EstimatorConfig& config, const DerivativeOracle* oracle) {
    const StreamKey key{config.seed, config.replicate};
    const auto& g = config.grid;
    switch (config.variant) {
        case Variant::crude: {
            const std::size_t n = config.crude_samples ? config.crude_samples : ipow(g.k, g.s);
            auto rep = crude(f, g.s, n, key, config.options);
            rep.r = config.r;
            return rep;
        }
        case Variant::haber1: return haber1(f, g, key, config.options);
        case Variant::haber2: return haber2(f, g, key, config.options);
        case Variant::star:
            if (!oracle || !*oracle) throw PreconditionError("the star estimator needs a derivative oracle");
            return estimate_star(f, *oracle, config.r, g, key, config.options);
        case Variant::hat: return estimate_hat(f, config.r, g, key, config.options);
        case Variant::tilde: return estimate_tilde(f, config.r, g, key, config.options);
        case Variant::vanishing: return estimate_vanishing(f, config.r, g, key, config.options);
    }
    throw DomainError("unknown estimator variant");
}

double asymptotic_variance_estimate(int s, const DerivativeOracle& oracle, int r,
                                    const AsymptoticVarianceOptions& options) {
    if (!oracle) throw PreconditionError("asymptotic variance needs a derivative oracle");
    if (s < 1) throw DomainError("dimension must be positive");
    if (r < 2 || r % 2 != 0) {
        throw PreconditionError("asymptotic variance is only available for even r >= 2");
    }
    if (options.budget < 2) throw DomainError("budget must be at least 2");
    const auto alphas = multi_indices(s, r);
    const std::size_t na = alphas.size();

    // cross integrals by the midpoint rule
    int q = options.quadrature_points;
    if (q <= 0) q = std::max(8, static_cast<int>(std::floor(std::pow(2.0, 20.0 / s))));
    const GridSpec quad(s, q);
    std::vector<double> cross(na * na, 0.0);
    {
        std::vector<double> d(na);
        std::vector<double> acc(na * na, 0.0);
        for (const auto& c : centres(quad)) {
            const auto x = centre_point(quad, c.j);
            for (std::size_t a = 0; a < na; ++a) d[a] = oracle(x, alphas[a].alpha);
            for (std::size_t a = 0; a < na; ++a) {
                for (std::size_t b = 0; b < na; ++b) acc[a * na + b] += d[a] * d[b];
            }
        }
        const double w = 1.0 / static_cast<double>(quad.count());
        for (std::size_t i = 0; i < acc.size(); ++i) cross[i] = acc[i] * w;
    }

    // joint replicates of the order-r estimator on the monomials at k = r
    const GridSpec coarse(s, r);
    std::vector<double> samples(options.budget * na);
    for (std::size_t b = 0; b < options.budget; ++b) {
        const StreamKey key{options.seed, b};
        for (std::size_t a = 0; a < na; ++a) {
            const auto& alpha = alphas[a].alpha;
            Integrand g = [&alpha](std::span<const double> u) {
                double p = 1.0;
                for (std::size_t i = 0; i < u.size(); ++i) p *= int_pow(u[i] - 0.5, alpha[i]);
                return p;
            };
            samples[b * na + a] = estimate_hat(g, r, coarse, key).value;
        }
    }
    std::vector<double> mean(na, 0.0);
    for (std::size_t b = 0; b < options.budget; ++b) {
        for (std::size_t a = 0; a < na; ++a) mean[a] += samples[b * na + a];
    }
    for (auto& m : mean) m /= static_cast<double>(options.budget);

    double total = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t c = 0; c < na; ++c) {
            double cov = 0.0;
            for (std::size_t b = 0; b < options.budget; ++b) {
                cov += (samples[b * na + a] - mean[a]) * (samples[b * na + c] - mean[c]);
            }
            cov /= static_cast<double>(options.budget - 1);
            total += cov / (alphas[a].factorial() * alphas[c].factorial()) * cross[a * na + c];
        }
    }
    return int_pow(static_cast<double>(r), 2 * r + s) * total;
}

}  // namespace cubstrat

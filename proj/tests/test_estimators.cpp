#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "cubstrat/errors.hpp"
#include "cubstrat/estimators.hpp"
#include "support.hpp"

using namespace cubstrat;
using testsupport::f1;
using testsupport::f1_derivative;

namespace {

const Integrand f1_integrand = [](std::span<const double> x) { return f1(x[0]); };
const DerivativeOracle f1_oracle = [](std::span<const double> x, std::span<const int> a) {
    return f1_derivative(x[0], a[0]);
};

using Runner = std::function<EstimateReport(int k, std::uint64_t rep)>;

// Least-squares slope of log MSE against log n over a ladder of k.
double mse_slope(const Runner& run, const std::vector<int>& ks, int reps, double truth) {
    std::vector<double> ln, le;
    for (int k : ks) {
        std::vector<double> v;
        double n = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            const auto out = run(k, static_cast<std::uint64_t>(rep));
            v.push_back(out.value);
            n = static_cast<double>(out.n_evaluations());
        }
        ln.push_back(std::log(n));
        le.push_back(std::log(testsupport::mse_against(v, truth)));
    }
    return testsupport::ls_slope(ln, le);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("moments of the uniform offset") {
    CHECK(d_moment(0, 3) == 1.0);
    CHECK(d_moment(1, 5) == 0.0);
    CHECK(d_moment(3, 2) == 0.0);
    CHECK(d_moment(2, 1) == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
    CHECK(d_moment(2, 2) == doctest::Approx(1.0 / 48.0).epsilon(1e-15));
    CHECK(d_moment(4, 1) == doctest::Approx(1.0 / 80.0).epsilon(1e-15));
}

TEST_CASE("dilation coefficients") {
    const auto one = lambda_coeffs(1);
    CHECK(one.lambdas == std::vector<int>{1});
    CHECK(one.gammas == std::vector<double>{1.0});
    CHECK(lambda_coeffs(2).gammas == std::vector<double>{0.5, 0.5});
    const auto four = lambda_coeffs(4);
    CHECK(four.lambdas == std::vector<int>{1, -1, 3, -3});
    CHECK(four.gammas == std::vector<double>{9.0 / 16, 9.0 / 16, -1.0 / 16, -1.0 / 16});
    CHECK(vanishing_margin(1) == 1);
    CHECK(vanishing_margin(2) == 1);
    CHECK(vanishing_margin(3) == 3);
    CHECK(vanishing_margin(4) == 3);
    for (int r = 1; r <= 8; ++r) {
        const auto c = lambda_coeffs(r);
        CHECK(c.margin == vanishing_margin(r));
        for (int i = 0; i < r; ++i) {
            long double acc = 0.0L;
            for (std::size_t j = 0; j < c.gammas.size(); ++j) acc += c.gammas[j] * std::pow(static_cast<long double>(c.lambdas[j]), i);
            CHECK(std::abs(static_cast<double>(acc) - (i == 0 ? 1.0 : 0.0)) <= 1e-12);
        }
        for (int l : c.lambdas) CHECK(std::abs(l) % 2 == 1);
    }
    // the exact rational solution agrees
    const auto exact = testsupport::rational_stencil({1, -1, 3, -3, 5, -5}, 0);
    const auto six = lambda_coeffs(6);
    for (std::size_t j = 0; j < 6; ++j) CHECK(six.gammas[j] == doctest::Approx(exact[j].get_d()).epsilon(1e-15));
}

TEST_CASE("hat stencil order rounds up to even") {
    CHECK(hat_stencil_order(1) == 2);
    CHECK(hat_stencil_order(2) == 2);
    CHECK(hat_stencil_order(3) == 4);
    CHECK(hat_stencil_order(4) == 4);
}

TEST_CASE("crude Monte Carlo") {
    const auto one = crude([](std::span<const double>) { return 1.0; }, 3, 1000, StreamKey{1, 0});
    CHECK(one.value == 1.0);
    CHECK(one.n_random == 1000);

    const auto big = crude(f1_integrand, 1, 100000, StreamKey{2, 0});
    const double var_f1 = (std::exp(2.0) - 1.0) / 4.0 - 1.0;
    CHECK(std::abs(big.value - 1.0) <= 4.0 * std::sqrt(var_f1 / 1e5));

    // standard error halves per factor 4 in n: slope -1/2 in log-log
    std::vector<double> ln, lsd;
    for (std::size_t n : {1000u, 100000u}) {
        std::vector<double> v;
        for (std::uint64_t rep = 0; rep < 200; ++rep) v.push_back(crude(f1_integrand, 1, n, StreamKey{3, rep}).value);
        ln.push_back(std::log(static_cast<double>(n)));
        lsd.push_back(0.5 * std::log(testsupport::moments(v).var));
    }
    CHECK(testsupport::ls_slope(ln, lsd) == doctest::Approx(-0.5).epsilon(0.12));
}

TEST_CASE("Haber estimators on constants and affine functions") {
    const GridSpec g(2, 5, 0);
    const auto c0 = [](std::span<const double>) { return 2.5; };
    CHECK(haber1(c0, g, StreamKey{1, 0}).value == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(haber2(c0, g, StreamKey{1, 0}).value == doctest::Approx(2.5).epsilon(1e-15));
    const auto affine = [](std::span<const double> x) { return 1.0 + 3.0 * x[0] - 2.0 * x[1]; };
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        CHECK(haber2(affine, g, StreamKey{4, rep}).value == doctest::Approx(1.5).epsilon(1e-14));
    }
    const auto h1 = haber1(c0, g, StreamKey{1, 0});
    CHECK(h1.n_random == 25);
    CHECK(h1.n_deterministic == 0);
    const auto h2 = haber2(c0, g, StreamKey{1, 0});
    CHECK(h2.n_random == 50);
    CHECK_THROWS_AS(haber1(c0, GridSpec(2, 5, 1), StreamKey{1, 0}), PreconditionError);
}

TEST_CASE("Haber I rate on u e^u") {
    const double slope = mse_slope([](int k, std::uint64_t rep) { return haber1(f1_integrand, GridSpec(1, k, 0), StreamKey{5, rep}); },
                                   {4, 8, 16, 32, 64, 128}, 200, 1.0);
    CHECK(slope == doctest::Approx(-3.0).epsilon(0.15));
}

TEST_CASE("polynomial exactness of the control-variate estimators") {
    std::mt19937_64 rng(21);
    for (int s = 1; s <= 3; ++s) {
        for (int r : {2, 3, 4}) {
            const GridSpec g(s, std::max(hat_stencil_order(r), 4), 0);
            for (int rep = 0; rep < 5; ++rep) {
                const auto p = testsupport::random_polynomial(s, r - 1, rng);
                const double truth = p.integral();
                const double tol = 1e-9 * std::max(std::abs(truth), p.scale());
                const DerivativeOracle oracle = [&p](std::span<const double> x, std::span<const int> a) {
                    return p.derivative(x, a);
                };
                const StreamKey key{31, static_cast<std::uint64_t>(rep)};
                CHECK(std::abs(estimate_star(p, oracle, r, g, key).value - truth) <= tol);
                CHECK(std::abs(estimate_hat(p, r, g, key).value - truth) <= tol);
                CHECK(std::abs(estimate_tilde(p, r, g, key).value - truth) <= tol);
            }
        }
    }
    // the worked case: r = 4, s = 2, k = 6
    const auto p = testsupport::random_polynomial(2, 3, rng);
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const double v = estimate_hat(p, 4, GridSpec(2, 6, 0), StreamKey{32, rep}).value;
        CHECK(std::abs(v - p.integral()) <= 1e-9 * std::max(std::abs(p.integral()), p.scale()));
    }
}

TEST_CASE("bit-exact equivalences between variants") {
    const GridSpec g(2, 6, 0);
    const auto f = [](std::span<const double> x) { return std::exp(x[0]) * std::sin(3.0 * x[1]) + x[0] * x[1]; };
    const DerivativeOracle zero = [](std::span<const double>, std::span<const int>) { return 0.0; };
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
        const StreamKey key{41, rep};
        const double h1 = haber1(f, g, key).value;
        const double h2 = haber2(f, g, key).value;
        CHECK(same_bits(estimate_tilde(f, 1, g, key).value, h1));
        CHECK(same_bits(estimate_vanishing(f, 1, vanishing_grid(2, 6, 1), key).value, h1));
        CHECK(same_bits(estimate_vanishing(f, 2, vanishing_grid(2, 6, 2), key).value, h2));
        CHECK(same_bits(estimate_hat(f, 1, g, key).value, h2));
        CHECK(same_bits(estimate_hat(f, 2, g, key).value, h2));
        CHECK(same_bits(estimate_star(f, zero, 4, g, key).value, h2));
        CHECK(same_bits(estimate_hat(f, 3, g, key).value, estimate_hat(f, 4, g, key).value));
        CHECK(same_bits(estimate_hat(f, 5, g, key).value, estimate_hat(f, 6, g, key).value));
    }
}

TEST_CASE("evaluation counts") {
    const auto c = [](std::span<const double>) { return 1.0; };
    const GridSpec g(2, 6, 0);
    const auto hat = estimate_hat(c, 4, g, StreamKey{});
    CHECK(hat.n_deterministic == 36);
    CHECK(hat.n_random == 72);
    const auto tilde = estimate_tilde(c, 3, g, StreamKey{});
    CHECK(tilde.n_deterministic == 36);
    CHECK(tilde.n_random == 36);
    for (int r = 1; r <= 5; ++r) {
        const int m = vanishing_margin(r);
        const auto v = estimate_vanishing(c, r, vanishing_grid(2, 8, r), StreamKey{7, 0});
        CHECK(v.n_random == static_cast<std::size_t>(r * (8 + 2 * m) * (8 + 2 * m)));
        CHECK(v.n_in_domain >= static_cast<std::size_t>(r * std::max(0, 8 - 2 * m) * std::max(0, 8 - 2 * m)));
        CHECK(v.n_in_domain <= v.n_random);
        CHECK(v.partial_averages.size() == static_cast<std::size_t>(r));
    }
}

TEST_CASE("estimators reject unusable grids") {
    const auto c = [](std::span<const double>) { return 1.0; };
    CHECK_THROWS_AS(estimate_hat(c, 4, GridSpec(1, 3, 0), StreamKey{}), ResolutionError);
    CHECK_THROWS_AS(estimate_tilde(c, 3, GridSpec(1, 2, 0), StreamKey{}), ResolutionError);
    CHECK_THROWS_AS(estimate_hat(c, 3, GridSpec(1, 6, 1), StreamKey{}), PreconditionError);
    CHECK_THROWS_AS(estimate_vanishing(c, 3, GridSpec(1, 6, 1), StreamKey{}), PreconditionError);
    CHECK_THROWS_AS(estimate_star(c, DerivativeOracle{}, 3, GridSpec(1, 6, 0), StreamKey{}), PreconditionError);
    EstimatorConfig cfg;
    cfg.variant = Variant::star;
    cfg.r = 3;
    cfg.grid = GridSpec(1, 6, 0);
    CHECK_THROWS_AS(estimate(c, cfg), PreconditionError);
}

TEST_CASE("variant names round trip") {
    for (auto v : {Variant::crude, Variant::haber1, Variant::haber2, Variant::star, Variant::hat, Variant::tilde,
                   Variant::vanishing}) {
        CHECK(parse_variant(to_string(v)) == v);
    }
    CHECK_THROWS_AS(parse_variant("nope"), DomainError);
}

TEST_CASE("dispatch matches the direct calls") {
    const GridSpec g(1, 8, 0);
    EstimatorConfig cfg;
    cfg.grid = g;
    cfg.seed = 9;
    cfg.replicate = 2;
    const StreamKey key{9, 2};
    cfg.variant = Variant::hat;
    cfg.r = 4;
    CHECK(same_bits(estimate(f1_integrand, cfg).value, estimate_hat(f1_integrand, 4, g, key).value));
    cfg.variant = Variant::tilde;
    cfg.r = 3;
    CHECK(same_bits(estimate(f1_integrand, cfg).value, estimate_tilde(f1_integrand, 3, g, key).value));
    cfg.variant = Variant::star;
    CHECK(same_bits(estimate(f1_integrand, cfg, &f1_oracle).value, estimate_star(f1_integrand, f1_oracle, 3, g, key).value));
    cfg.variant = Variant::vanishing;
    cfg.grid = vanishing_grid(1, 8, 3);
    CHECK(same_bits(estimate(f1_integrand, cfg).value, estimate_vanishing(f1_integrand, 3, cfg.grid, key).value));
}

TEST_CASE("results do not depend on the thread count") {
    const auto f = [](std::span<const double> x) { return std::exp(x[0] - x[1]) * x[1]; };
    const GridSpec g(2, 12, 0);
    for (int threads : {2, 3, 5}) {
        EstimateOptions opt;
        opt.threads = threads;
        opt.keep_terms = true;
        EstimateOptions one;
        one.keep_terms = true;
        const StreamKey key{51, 0};
        const auto a = estimate_hat(f, 4, g, key, one);
        const auto b = estimate_hat(f, 4, g, key, opt);
        CHECK(same_bits(a.value, b.value));
        CHECK(a.per_stratum_terms == b.per_stratum_terms);
        CHECK(same_bits(estimate_tilde(f, 3, g, key).value, estimate_tilde(f, 3, g, key, opt).value));
        CHECK(same_bits(estimate_vanishing(f, 3, vanishing_grid(2, 12, 3), key).value,
                        estimate_vanishing(f, 3, vanishing_grid(2, 12, 3), key, opt).value));
        CHECK(same_bits(haber2(f, g, key).value, haber2(f, g, key, opt).value));
    }
}

TEST_CASE("retained terms add up to the estimate") {
    const GridSpec g(2, 6, 0);
    EstimateOptions opt;
    opt.keep_terms = true;
    const auto f = [](std::span<const double> x) { return std::cos(x[0] + 2.0 * x[1]); };
    for (auto run : std::vector<std::function<EstimateReport()>>{
             [&] { return haber1(f, g, StreamKey{1, 0}, opt); },
             [&] { return haber2(f, g, StreamKey{1, 0}, opt); },
             [&] { return estimate_hat(f, 4, g, StreamKey{1, 0}, opt); },
             [&] { return estimate_tilde(f, 3, g, StreamKey{1, 0}, opt); },
             [&] { return estimate_vanishing(f, 3, vanishing_grid(2, 6, 3), StreamKey{1, 0}, opt); }}) {
        const auto rep = run();
        REQUIRE_FALSE(rep.per_stratum_terms.empty());
        long double acc = 0.0L;
        for (double t : rep.per_stratum_terms) acc += t;
        CHECK(static_cast<double>(acc / rep.normalizer) == doctest::Approx(rep.value).epsilon(1e-12));
    }
}

TEST_CASE("star beats Haber II on u e^u") {
    const GridSpec g(1, 8, 0);
    std::vector<double> star_v, h2_v;
    for (std::uint64_t rep = 0; rep < 1000; ++rep) {
        const StreamKey key{61, rep};
        star_v.push_back(estimate_star(f1_integrand, f1_oracle, 4, g, key).value);
        h2_v.push_back(haber2(f1_integrand, g, key).value);
    }
    CHECK(testsupport::moments(star_v).var < testsupport::moments(h2_v).var);
}

TEST_CASE("rates of the stencil estimators on u e^u") {
    const double hat4 = mse_slope([](int k, std::uint64_t rep) { return estimate_hat(f1_integrand, 4, GridSpec(1, k, 0), StreamKey{71, rep}); },
                                  {4, 6, 8, 12, 16}, 100, 1.0);
    CHECK(hat4 == doctest::Approx(-9.0).epsilon(0.15));
    const double tilde3 = mse_slope([](int k, std::uint64_t rep) { return estimate_tilde(f1_integrand, 3, GridSpec(1, k, 0), StreamKey{72, rep}); },
                                    {4, 8, 16, 32}, 100, 1.0);
    CHECK(tilde3 == doctest::Approx(-7.0).epsilon(0.15));
}

TEST_CASE("vanishing estimator never calls f outside the cube") {
    const Integrand strict = [](std::span<const double> x) {
        for (double v : x) {
            if (v < 0.0 || v > 1.0) throw std::logic_error("called outside the cube");
        }
        return x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
    };
    for (int r = 1; r <= 5; ++r) {
        CHECK_NOTHROW(estimate_vanishing(strict, r, vanishing_grid(2, 6, r), StreamKey{81, 0}));
    }
}

TEST_CASE("vanishing estimator is unbiased for a plateau") {
    // 1 on [0.2, 0.8]^2, 0 elsewhere: integral 0.36
    const auto plateau = [](std::span<const double> x) {
        return (x[0] >= 0.2 && x[0] <= 0.8 && x[1] >= 0.2 && x[1] <= 0.8) ? 1.0 : 0.0;
    };
    std::vector<double> v;
    for (std::uint64_t rep = 0; rep < 10000; ++rep) {
        v.push_back(estimate_vanishing(plateau, 3, vanishing_grid(2, 4, 3), StreamKey{82, rep}).value);
    }
    const auto m = testsupport::moments(v);
    CHECK(std::abs(m.mean - 0.36) <= 4.0 * m.stderr_mean());
}

TEST_CASE("shifted sums") {
    const auto one = [](std::span<const double>) { return 1.0; };
    CHECK(unbiased_shifted_sum(one, 1, GridSpec(2, 5, 0), StreamKey{1, 0}) == 1.0);
    CHECK_THROWS_AS(unbiased_shifted_sum(one, 3, GridSpec(1, 5, 0), StreamKey{1, 0}), PreconditionError);
    CHECK_THROWS_AS(unbiased_shifted_sum(one, 2, GridSpec(1, 5, 2), StreamKey{1, 0}), PreconditionError);
    std::vector<double> v;
    for (std::uint64_t rep = 0; rep < 10000; ++rep) v.push_back(unbiased_shifted_sum(one, 3, GridSpec(1, 4, 1), StreamKey{83, rep}));
    const auto m = testsupport::moments(v);
    CHECK(m.var > 0.0);
    CHECK(std::abs(m.mean - 1.0) <= 4.0 * m.stderr_mean());
}

TEST_CASE("asymptotic variance") {
    // polynomial of degree < r: all top derivatives vanish
    const DerivativeOracle cubic = [](std::span<const double> x, std::span<const int> a) {
        const int n = a[0];
        return n == 0 ? x[0] * x[0] * x[0] : n == 1 ? 3 * x[0] * x[0] : n == 2 ? 6 * x[0] : n == 3 ? 6.0 : 0.0;
    };
    CHECK(asymptotic_variance_estimate(1, cubic, 4) == 0.0);
    // s = 1, r = 2: per-stratum variance f''(c)^2 Var(U^2) / 4 integrates to int f''^2 / 720
    const double exact = (3.25 * std::exp(2.0) - 1.25) / 720.0;
    CHECK(asymptotic_variance_estimate(1, f1_oracle, 2, {4000, 3, 0}) == doctest::Approx(exact).epsilon(0.1));
    CHECK_THROWS_AS(asymptotic_variance_estimate(1, f1_oracle, 3), PreconditionError);
    CHECK_THROWS_AS(asymptotic_variance_estimate(1, DerivativeOracle{}, 2), PreconditionError);
}

}  // TEST_SUITE

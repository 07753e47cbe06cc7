#pragma once

// Reference computations for the tests. Nothing here calls into the library
// code under test, so agreement is evidence rather than tautology.

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace testsupport {

/// Exact solution of sum_j w_j x_j^i = a! [i == a], i = 0..l-1, by Gaussian
/// elimination over the rationals.
inline std::vector<mpq_class> rational_stencil(const std::vector<int>& nodes, int a) {
    const std::size_t l = nodes.size();
    std::vector<std::vector<mpq_class>> m(l, std::vector<mpq_class>(l + 1));
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            mpq_class v = 1;
            for (std::size_t e = 0; e < i; ++e) v *= nodes[j];
            m[i][j] = v;
        }
        mpz_class fact = 1;
        for (int q = 2; q <= a; ++q) fact *= q;
        m[i][l] = (static_cast<int>(i) == a) ? mpq_class(fact) : mpq_class(0);
    }
    for (std::size_t col = 0; col < l; ++col) {
        std::size_t piv = col;
        while (piv < l && m[piv][col] == 0) ++piv;
        if (piv == l) throw std::runtime_error("singular Vandermonde system");
        std::swap(m[piv], m[col]);
        for (std::size_t row = 0; row < l; ++row) {
            if (row == col || m[row][col] == 0) continue;
            const mpq_class factor = m[row][col] / m[col][col];
            for (std::size_t c = col; c <= l; ++c) m[row][c] -= factor * m[col][c];
        }
    }
    std::vector<mpq_class> w(l);
    for (std::size_t i = 0; i < l; ++i) w[i] = m[i][l] / m[i][i];
    return w;
}

/// Random polynomial in s variables with total degree <= max_degree and
/// coefficients uniform in [-1, 1].
struct TestPolynomial {
    int s = 1;
    std::vector<double> coef;
    std::vector<std::vector<int>> exps;

    double operator()(std::span<const double> u) const {
        double acc = 0.0;
        for (std::size_t t = 0; t < coef.size(); ++t) {
            double m = coef[t];
            for (int i = 0; i < s; ++i) {
                for (int e = 0; e < exps[t][static_cast<std::size_t>(i)]; ++e) m *= u[static_cast<std::size_t>(i)];
            }
            acc += m;
        }
        return acc;
    }

    double derivative(std::span<const double> u, std::span<const int> alpha) const {
        double acc = 0.0;
        for (std::size_t t = 0; t < coef.size(); ++t) {
            double m = coef[t];
            for (int i = 0; i < s; ++i) {
                const int e = exps[t][static_cast<std::size_t>(i)];
                const int a = alpha[static_cast<std::size_t>(i)];
                if (a > e) {
                    m = 0.0;
                    break;
                }
                for (int q = 0; q < a; ++q) m *= (e - q);
                for (int q = 0; q < e - a; ++q) m *= u[static_cast<std::size_t>(i)];
            }
            acc += m;
        }
        return acc;
    }

    double integral() const {
        long double acc = 0.0L;
        for (std::size_t t = 0; t < coef.size(); ++t) {
            long double m = coef[t];
            for (int e : exps[t]) m /= (e + 1);
            acc += m;
        }
        return static_cast<double>(acc);
    }

    /// Sum of |coefficients|: a scale for relative tolerances that does not
    /// collapse when the integral happens to be near zero.
    double scale() const {
        double a = 0.0;
        for (double c : coef) a += std::abs(c);
        return a;
    }
};

inline TestPolynomial random_polynomial(int s, int max_degree, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    TestPolynomial p;
    p.s = s;
    std::vector<int> e(static_cast<std::size_t>(s), 0);
    // enumerate every exponent vector with total degree <= max_degree
    auto rec = [&](auto&& self, int axis, int left) -> void {
        if (axis == s) {
            p.exps.push_back(e);
            p.coef.push_back(coef(rng));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            e[static_cast<std::size_t>(axis)] = v;
            self(self, axis + 1, left - v);
        }
        e[static_cast<std::size_t>(axis)] = 0;
    };
    rec(rec, 0, max_degree);
    return p;
}

/// Ordinary least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;  ///< unbiased sample variance
    double stderr_mean() const { return std::sqrt(var / static_cast<double>(n)); }
    std::size_t n = 0;
};

inline Moments moments(const std::vector<double>& v) {
    Moments m;
    m.n = v.size();
    long double s = 0.0L;
    for (double x : v) s += x;
    m.mean = static_cast<double>(s / static_cast<long double>(v.size()));
    long double ss = 0.0L;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.var = static_cast<double>(ss / static_cast<long double>(v.size() - 1));
    return m;
}

inline double mse_against(const std::vector<double>& v, double truth) {
    long double ss = 0.0L;
    for (double x : v) ss += (x - truth) * (x - truth);
    return static_cast<double>(ss / static_cast<long double>(v.size()));
}

/// u e^u and its derivatives (u + a) e^u.
inline double f1(double u) { return u * std::exp(u); }
inline double f1_derivative(double u, int a) { return (u + a) * std::exp(u); }

}  // namespace testsupport

#include "cubstrat/transform.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "cubstrat/errors.hpp"

namespace cubstrat {

namespace {

void require_interior(std::span<const double> u) {
    for (double v : u) {
        if (!(v > 0.0 && v < 1.0)) throw DomainError("psi is only defined on the open unit cube");
    }
}

double psi1(double u, double tau) { return (2.0 * u - 1.0) / std::pow(u * (1.0 - u), tau); }

double psi1_prime(double u, double tau) {
    const double q = u * (1.0 - u);
    const double d = 2.0 * u - 1.0;
    return 2.0 / std::pow(q, tau) + tau * d * d / std::pow(q, tau + 1.0);
}

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Vec to_vec(std::span<const double> x) { return Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size())); }

class Derivatives {
public:
    explicit Derivatives(const LogDensity& h) : h_(h) {}

    double value(const Vec& x) const { return h_.value(std::span<const double>(x.data(), x.size())); }

    Vec gradient(const Vec& x) const {
        Vec g(x.size());
        if (h_.gradient) {
            h_.gradient(std::span<const double>(x.data(), x.size()), std::span<double>(g.data(), g.size()));
            return g;
        }
        Vec y = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double step = 1e-5 * std::max(1.0, std::abs(x[i]));
            y[i] = x[i] + step;
            const double up = value(y);
            y[i] = x[i] - step;
            const double down = value(y);
            y[i] = x[i];
            g[i] = (up - down) / (2.0 * step);
        }
        return g;
    }

    Mat hessian(const Vec& x) const {
        const auto n = x.size();
        Mat H(n, n);
        if (h_.hessian) {
            h_.hessian(std::span<const double>(x.data(), x.size()), std::span<double>(H.data(), H.size()));
            // symmetric, so row- versus column-major storage does not matter
            return 0.5 * (H + H.transpose());
        }
        if (h_.gradient) {
            Vec y = x;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double step = 1e-5 * std::max(1.0, std::abs(x[i]));
                y[i] = x[i] + step;
                const Vec up = gradient(y);
                y[i] = x[i] - step;
                const Vec down = gradient(y);
                y[i] = x[i];
                H.col(i) = (up - down) / (2.0 * step);
            }
            return 0.5 * (H + H.transpose());
        }
        Vec y = x;
        const double f0 = value(x);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double hi = 1e-4 * std::max(1.0, std::abs(x[i]));
            y[i] = x[i] + hi;
            const double fp = value(y);
            y[i] = x[i] - hi;
            const double fm = value(y);
            y[i] = x[i];
            H(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
            for (Eigen::Index j = 0; j < i; ++j) {
                const double hj = 1e-4 * std::max(1.0, std::abs(x[j]));
                auto at = [&](double si, double sj) {
                    Vec z = x;
                    z[i] += si * hi;
                    z[j] += sj * hj;
                    return value(z);
                };
                H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
            }
        }
        return H;
    }

private:
    const LogDensity& h_;
};

}  // namespace

std::vector<double> psi(std::span<const double> u, double tau) {
    require_interior(u);
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) x[i] = psi1(u[i], tau);
    return x;
}

double jacobian_factor(std::span<const double> u, double tau) {
    require_interior(u);
    double j = 1.0;
    for (double v : u) j *= psi1_prime(v, tau);
    return j;
}

Integrand wrap(Integrand g, double tau) {
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    return [g = std::move(g), tau](std::span<const double> u) -> double {
        for (double v : u) {
            if (!(v > 0.0 && v < 1.0)) return 0.0;
        }
        std::vector<double> x(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) x[i] = psi1(u[i], tau);
        const double gv = g(x);
        if (!std::isfinite(gv)) throw EvaluationError("wrapped integrand returned a non-finite value");
        if (gv == 0.0) return 0.0;
        double j = 1.0;
        for (double v : u) j *= psi1_prime(v, tau);
        return gv * j;
    };
}

LaplaceResult laplace_reparametrize(const LogDensity& h, std::span<const double> mode_guess,
                                    const LaplaceOptions& options) {
    if (!h.value) throw PreconditionError("log-density has no value function");
    if (mode_guess.empty()) throw DomainError("mode guess must have at least one coordinate");
    if (!(options.tau > 0.0)) throw DomainError("tau must be positive");
    const Derivatives d(h);
    Vec x = to_vec(mode_guess);
    double fx = d.value(x);
    std::ostringstream trace;
    auto fail = [&](const std::string& why) {
        throw OptimizationError("mode search failed: " + why + "\n" + trace.str());
    };
    if (!std::isfinite(fx)) fail("log-density is not finite at the starting point");

    int it = 0;
    Vec g = d.gradient(x);
    for (; it < options.max_iterations; ++it) {
        trace << "iter " << it << " h=" << fx << " |grad|=" << g.lpNorm<Eigen::Infinity>() << "\n";
        if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;
        const Mat neg = -d.hessian(x);
        Vec step;
        Eigen::LLT<Mat> llt(neg);
        if (llt.info() == Eigen::Success) {
            step = llt.solve(g);
        } else {
            step = g;  // not concave here: plain ascent
        }
        double t = 1.0;
        bool improved = false;
        for (int back = 0; back < 60; ++back) {
            const Vec cand = x + t * step;
            const double fc = d.value(cand);
            if (std::isfinite(fc) && fc >= fx) {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) fail("line search could not increase the log-density");
        g = d.gradient(x);
    }
    if (g.lpNorm<Eigen::Infinity>() >= options.gradient_tolerance) fail("iteration limit reached");

    const Mat neg = -d.hessian(x);
    Eigen::LLT<Mat> llt(neg);
    if (llt.info() != Eigen::Success) fail("Hessian at the mode is not negative definite");
    Mat L;
    if (options.scale == ScaleConvention::cholesky_of_hessian) {
        L = llt.matrixL();
    } else {
        const Mat inv = llt.solve(Mat::Identity(neg.rows(), neg.cols()));
        Eigen::LLT<Mat> inv_llt(inv);
        if (inv_llt.info() != Eigen::Success) fail("inverse Hessian is not positive definite");
        L = inv_llt.matrixL();
    }

    LaplaceResult out;
    const auto n = static_cast<std::size_t>(x.size());
    out.mode.assign(x.data(), x.data() + x.size());
    out.scale.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            out.scale[i * n + j] = L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        out.log_abs_det += std::log(std::abs(L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    }
    out.peak = fx;
    out.log_offset = options.subtract_peak ? fx : 0.0;
    out.iterations = it;

    const double det = std::exp(out.log_abs_det);
    const double offset = out.log_offset;
    const double tau = options.tau;
    auto value = h.value;
    auto mode = out.mode;
    auto scale = out.scale;
    out.integrand = [value, mode, scale, det, offset, tau, n](std::span<const double> u) -> double {
        for (double v : u) {
            if (!(v > 0.0 && v < 1.0)) return 0.0;
        }
        std::vector<double> z(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = psi1(u[i], tau);
        std::vector<double> b(mode);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) b[i] += scale[i * n + j] * z[j];
        }
        const double hv = value(b);
        if (std::isnan(hv)) throw EvaluationError("log-density returned NaN");
        const double e = std::exp(hv - offset);
        if (e == 0.0) return 0.0;
        double j = 1.0;
        for (double v : u) j *= psi1_prime(v, tau);
        return e * det * j;
    };
    return out;
}

}  // namespace cubstrat

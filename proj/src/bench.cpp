#include "cubstrat/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>

#include "cubstrat/errors.hpp"
#include "cubstrat/numeric.hpp"

namespace cubstrat {

namespace {

double falling(int e, int a) {
    double c = 1.0;
    for (int i = 0; i < a; ++i) c *= (e - i);
    return c;
}

Polynomial product_of_univariate(int s, const std::vector<double>& coeffs) {
    Polynomial p;
    p.s = s;
    p.terms.push_back({1.0, std::vector<int>(static_cast<std::size_t>(s), 0)});
    for (int axis = 0; axis < s; ++axis) {
        std::vector<Polynomial::Term> next;
        for (const auto& t : p.terms) {
            for (std::size_t d = 0; d < coeffs.size(); ++d) {
                if (coeffs[d] == 0.0) continue;
                auto term = t;
                term.coef *= coeffs[d];
                term.exps[static_cast<std::size_t>(axis)] = static_cast<int>(d);
                next.push_back(std::move(term));
            }
        }
        p.terms = std::move(next);
    }
    return p;
}

BenchIntegrand from_polynomial(std::string name, Polynomial p, bool vanishing) {
    BenchIntegrand out;
    out.name = std::move(name);
    out.s = p.s;
    out.exact = p.integral();
    out.vanishing = vanishing;
    auto shared = std::make_shared<const Polynomial>(std::move(p));
    out.f = [shared](std::span<const double> u) { return (*shared)(u); };
    out.oracle = [shared](std::span<const double> u, std::span<const int> a) { return shared->derivative(u, a); };
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, std::size_t line) {
    const auto t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (t.empty() || used != t.size()) {
        throw DomainError("line " + std::to_string(line) + ": '" + t + "' is not a number");
    }
    return v;
}

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> design_row(const LogisticData& data, std::size_t i, int s) {
    std::vector<double> x(static_cast<std::size_t>(s));
    x[0] = 1.0;
    for (int p = 1; p < s; ++p) x[static_cast<std::size_t>(p)] = data.predictors[i][static_cast<std::size_t>(p - 1)];
    return x;
}

std::string format_double(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

}  // namespace

double Polynomial::operator()(std::span<const double> u) const {
    double acc = 0.0;
    for (const auto& t : terms) {
        double m = t.coef;
        for (std::size_t i = 0; i < t.exps.size(); ++i) m *= std::pow(u[i], t.exps[i]);
        acc += m;
    }
    return acc;
}

double Polynomial::derivative(std::span<const double> u, std::span<const int> alpha) const {
    double acc = 0.0;
    for (const auto& t : terms) {
        double m = t.coef;
        for (std::size_t i = 0; i < t.exps.size() && m != 0.0; ++i) {
            const int e = t.exps[i];
            const int a = alpha[i];
            if (a > e) {
                m = 0.0;
                break;
            }
            m *= falling(e, a) * std::pow(u[i], e - a);
        }
        acc += m;
    }
    return acc;
}

double Polynomial::integral() const {
    long double acc = 0.0L;
    for (const auto& t : terms) {
        long double m = t.coef;
        for (int e : t.exps) m /= (e + 1);
        acc += m;
    }
    return static_cast<double>(acc);
}

int Polynomial::degree() const {
    int d = 0;
    for (const auto& t : terms) {
        int e = 0;
        for (int v : t.exps) e += v;
        d = std::max(d, e);
    }
    return d;
}

BenchIntegrand test_function(int s) {
    if (s < 1) throw DomainError("dimension must be positive");
    BenchIntegrand out;
    out.name = "fs";
    out.s = s;
    // s = 1 is the special case u e^u (integral 1); s >= 2 uses the product form
    out.f = [](std::span<const double> u) {
        if (u.size() == 1) return u[0] * std::exp(u[0]);
        double prod = 1.0;
        double pre = 1.0;
        for (std::size_t j = 0; j < u.size(); ++j) {
            prod *= u[j];
            pre *= std::pow(u[j], static_cast<double>(j));
        }
        return pre * std::exp(prod);
    };
    if (s == 1) {
        out.exact = 1.0;
        out.oracle = [](std::span<const double> u, std::span<const int> a) { return (u[0] + a[0]) * std::exp(u[0]); };
    } else {
        double tail = 0.0;
        double fact = 1.0;
        for (int j = 0; j < s; ++j) {
            if (j > 0) fact *= j;
            tail += 1.0 / fact;
        }
        out.exact = std::numbers::e - tail;
    }
    return out;
}

double test_function_norm(int r) { return (1.0 + r) * std::numbers::e; }

BenchIntegrand quadratic_integrand(int s) {
    if (s < 1) throw DomainError("dimension must be positive");
    Polynomial p;
    p.s = s;
    const auto zero = std::vector<int>(static_cast<std::size_t>(s), 0);
    p.terms.push_back({1.0, zero});
    for (int i = 0; i < s; ++i) {
        auto e = zero;
        e[static_cast<std::size_t>(i)] = 1;
        p.terms.push_back({(i + 1.0) / (s + 1.0), e});
        for (int j = i; j < s; ++j) {
            auto q = zero;
            ++q[static_cast<std::size_t>(i)];
            ++q[static_cast<std::size_t>(j)];
            p.terms.push_back({(i == j ? -1.0 : 1.0) / (1.0 + i + j), q});
        }
    }
    return from_polynomial("poly", std::move(p), false);
}

BenchIntegrand wrapped_gaussian(int s, double tau) {
    if (s < 1) throw DomainError("dimension must be positive");
    BenchIntegrand out;
    out.name = "gauss";
    out.s = s;
    out.exact = 1.0;
    out.vanishing = true;
    out.f = wrap(
        [](std::span<const double> x) {
            double q = 0.0;
            for (double v : x) q += v * v;
            return std::exp(-0.5 * q - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
        },
        tau);
    return out;
}

BenchIntegrand bump(int s, int p) {
    if (s < 1 || p < 1) throw DomainError("bump needs s >= 1 and p >= 1");
    // (u - u^2)^p expanded by the binomial theorem
    std::vector<double> coeffs(static_cast<std::size_t>(2 * p + 1), 0.0);
    double binom = 1.0;
    for (int i = 0; i <= p; ++i) {
        coeffs[static_cast<std::size_t>(p + i)] = (i % 2 == 0 ? 1.0 : -1.0) * binom;
        binom = binom * (p - i) / (i + 1);
    }
    auto poly = product_of_univariate(s, coeffs);
    auto out = from_polynomial("bump", std::move(poly), true);
    // closed form B(p+1, p+1)^s is more accurate than summing the expansion
    double beta = 1.0;
    for (int i = 1; i <= p; ++i) beta *= static_cast<double>(i) / (p + i);
    beta /= (2 * p + 1);
    out.exact = std::pow(beta, s);
    const int pp = p;
    out.f = [pp](std::span<const double> u) {
        double v = 1.0;
        for (double x : u) v *= std::pow(x * (1.0 - x), pp);
        return v;
    };
    return out;
}

LogisticData read_logistic_csv(const std::string& path, int label_column, bool standardize) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DomainError("dataset '" + path + "' is empty");
    const auto header = split(line, ',');
    const auto ncol = header.size();
    if (ncol < 1) throw DomainError("dataset header has no columns");
    const std::size_t label = label_column < 0 ? ncol - 1 : static_cast<std::size_t>(label_column);
    if (label >= ncol) throw DomainError("label column out of range");

    LogisticData data;
    std::vector<double> raw_labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != ncol) {
            throw DomainError("line " + std::to_string(lineno) + ": expected " + std::to_string(ncol) + " fields");
        }
        std::vector<double> row;
        for (std::size_t c = 0; c < ncol; ++c) {
            const double v = parse_number(cells[c], lineno);
            if (c == label) {
                raw_labels.push_back(v);
            } else {
                row.push_back(v);
            }
        }
        data.predictors.push_back(std::move(row));
    }
    const bool zero_one = std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == 0.0 || v == 1.0; });
    const bool signed_labels =
        std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == -1.0 || v == 1.0; });
    if (!zero_one && !signed_labels) throw DomainError("labels must be in {0,1} or {-1,1}");
    for (double v : raw_labels) data.labels.push_back(zero_one ? 2.0 * v - 1.0 : v);

    if (standardize && !data.predictors.empty()) {
        const std::size_t p = data.predictors.front().size();
        const auto n = static_cast<double>(data.predictors.size());
        for (std::size_t c = 0; c < p; ++c) {
            double mean = 0.0;
            for (const auto& row : data.predictors) mean += row[c];
            mean /= n;
            double var = 0.0;
            for (const auto& row : data.predictors) var += (row[c] - mean) * (row[c] - mean);
            const double sd = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
            for (auto& row : data.predictors) row[c] = sd > 0.0 ? (row[c] - mean) / sd : row[c] - mean;
        }
    }
    return data;
}

LogDensity logistic_log_posterior(const LogisticData& data, int s, double prior_sd) {
    if (s < 1) throw DomainError("dimension must be positive");
    if (!(prior_sd > 0.0)) throw DomainError("prior sd must be positive");
    for (const auto& row : data.predictors) {
        if (static_cast<int>(row.size()) < s - 1) {
            throw DomainError("dataset has fewer than " + std::to_string(s - 1) + " predictors");
        }
    }
    auto d = std::make_shared<LogisticData>(data);
    const double prec = 1.0 / (prior_sd * prior_sd);
    const double log_norm = -0.5 * s * std::log(2.0 * std::numbers::pi * prior_sd * prior_sd);
    LogDensity h;
    h.value = [d, s, prec, log_norm](std::span<const double> beta) {
        double acc = log_norm;
        for (double b : beta) acc -= 0.5 * prec * b * b;
        for (std::size_t i = 0; i < d->labels.size(); ++i) {
            const auto x = design_row(*d, i, s);
            double z = 0.0;
            for (int p = 0; p < s; ++p) z += beta[static_cast<std::size_t>(p)] * x[static_cast<std::size_t>(p)];
            acc += log_sigmoid(d->labels[i] * z);
        }
        return acc;
    };
    h.gradient = [d, s, prec](std::span<const double> beta, std::span<double> g) {
        for (int p = 0; p < s; ++p) g[static_cast<std::size_t>(p)] = -prec * beta[static_cast<std::size_t>(p)];
        for (std::size_t i = 0; i < d->labels.size(); ++i) {
            const auto x = design_row(*d, i, s);
            double z = 0.0;
            for (int p = 0; p < s; ++p) z += beta[static_cast<std::size_t>(p)] * x[static_cast<std::size_t>(p)];
            const double y = d->labels[i];
            const double w = y * sigmoid(-y * z);
            for (int p = 0; p < s; ++p) g[static_cast<std::size_t>(p)] += w * x[static_cast<std::size_t>(p)];
        }
    };
    h.hessian = [d, s, prec](std::span<const double> beta, std::span<double> H) {
        const auto n = static_cast<std::size_t>(s);
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t p = 0; p < n; ++p) H[p * n + p] = -prec;
        for (std::size_t i = 0; i < d->labels.size(); ++i) {
            const auto x = design_row(*d, i, s);
            double z = 0.0;
            for (std::size_t p = 0; p < n; ++p) z += beta[p] * x[p];
            const double w = sigmoid(z) * sigmoid(-z);
            for (std::size_t p = 0; p < n; ++p) {
                for (std::size_t q = 0; q < n; ++q) H[p * n + q] -= w * x[p] * x[q];
            }
        }
    };
    return h;
}

BenchIntegrand logistic_marginal_likelihood(const LogisticData& data, int s, const LogisticOptions& options) {
    const auto h = logistic_log_posterior(data, s, options.prior_sd);
    LaplaceOptions lo(options.scale);
    lo.tau = options.tau;
    const std::vector<double> guess(static_cast<std::size_t>(s), 0.0);
    auto lap = laplace_reparametrize(h, guess, lo);
    BenchIntegrand out;
    out.name = "logistic";
    out.s = s;
    out.vanishing = true;
    out.f = std::move(lap.integrand);
    return out;
}

RelMode parse_rel_mode(const std::string& name) {
    if (name == "auto") return RelMode::automatic;
    if (name == "mse") return RelMode::mse;
    if (name == "mse-literal") return RelMode::mse_literal;
    if (name == "var") return RelMode::var;
    throw DomainError("unknown rel-mode '" + name + "' (auto, mse, mse-literal, var)");
}

std::string to_string(RelMode mode) {
    switch (mode) {
        case RelMode::automatic: return "auto";
        case RelMode::mse: return "mse";
        case RelMode::mse_literal: return "mse-literal";
        case RelMode::var: return "var";
    }
    return "auto";
}

BenchIntegrand make_integrand(const ExperimentConfig& config) {
    const auto& fn = config.fn;
    if (fn == "fs") return test_function(config.dim);
    if (fn == "poly") return quadratic_integrand(config.dim);
    if (fn == "gauss") return wrapped_gaussian(config.dim, config.tau);
    if (fn == "bump") return bump(config.dim, config.bump_power);
    if (fn == "logistic") {
        if (config.dataset.empty()) throw DomainError("the logistic workload needs --dataset");
        if (!config.scale) throw DomainError("the logistic workload needs an explicit scale convention");
        LogisticOptions lo(*config.scale);
        lo.prior_sd = config.prior_sd;
        lo.tau = config.tau;
        lo.label_column = config.label_column;
        lo.standardize = config.standardize;
        const auto data = read_logistic_csv(config.dataset, config.label_column, config.standardize);
        return logistic_marginal_likelihood(data, config.dim, lo);
    }
    throw DomainError("unknown integrand '" + fn + "' (fs, poly, gauss, bump, logistic)");
}

std::uint64_t cell_seed(std::uint64_t master, Variant variant, int r, int k) {
    const int parts[] = {static_cast<int>(variant), r, k};
    return mix64(master ^ hash_ints(parts, 0x43454c4cULL));
}

namespace {

// Smallest k the variant accepts at order r.
int minimum_k(Variant v, int r) {
    switch (v) {
        case Variant::hat: return r >= 3 ? hat_stencil_order(r) : 1;
        case Variant::tilde: return r >= 2 ? r : 1;
        default: return 1;
    }
}

GridSpec grid_for(Variant v, int s, int k, int r) {
    if (v == Variant::vanishing) return vanishing_grid(s, k, r);
    return GridSpec(s, k);
}

}  // namespace

std::vector<ResultRow> run(const ExperimentConfig& config) {
    if (config.reps < 2) throw DomainError("at least two replicates are needed");
    if (config.k_values.empty() || config.r_values.empty() || config.variants.empty()) {
        throw DomainError("variant, r and k lists must be non-empty");
    }
    for (std::size_t i = 1; i < config.k_values.size(); ++i) {
        if (config.k_values[i] <= config.k_values[i - 1]) throw DomainError("k list must be strictly increasing");
    }
    const auto integrand = make_integrand(config);
    RelMode mode = config.rel_mode;
    if (mode == RelMode::automatic) mode = integrand.exact ? RelMode::mse : RelMode::var;
    if ((mode == RelMode::mse || mode == RelMode::mse_literal) && !integrand.exact) {
        throw DomainError("integrand '" + integrand.name + "' has no known integral; use --rel-mode var");
    }
    if (std::find(config.variants.begin(), config.variants.end(), Variant::star) != config.variants.end() &&
        !integrand.oracle) {
        throw DomainError("integrand '" + integrand.name + "' has no derivative oracle for the star estimator");
    }

    std::vector<ResultRow> rows;
    for (Variant v : config.variants) {
        for (int r : config.r_values) {
            if (v == Variant::haber1 && r != 1) continue;
            if (v == Variant::haber2 && r != 2) continue;
            for (int k : config.k_values) {
                if (k < minimum_k(v, r)) {
                    std::cerr << "skipping " << to_string(v) << " r=" << r << " k=" << k << ": k too small\n";
                    continue;
                }
                EstimatorConfig ec;
                ec.variant = v;
                ec.r = r;
                ec.grid = grid_for(v, config.dim, k, r);
                ec.seed = cell_seed(config.seed, v, r, k);
                ec.options.block_stencils = config.block_stencils;
                const auto reps = static_cast<std::size_t>(config.reps);
                std::vector<double> values(reps);
                std::vector<double> counts(reps);
                const DerivativeOracle* oracle = integrand.oracle ? &integrand.oracle : nullptr;
                parallel_for(reps, config.threads, [&](std::size_t i) {
                    auto local = ec;
                    local.replicate = i;
                    const auto rep = estimate(integrand.f, local, oracle);
                    values[i] = rep.value;
                    counts[i] = static_cast<double>(rep.n_in_domain);
                });
                const double n = static_cast<double>(reps);
                const double mean = pairwise_sum(values) / n;
                double ss = 0.0;
                for (double x : values) ss += (x - mean) * (x - mean);
                const double var = ss / (n - 1.0);
                ResultRow row;
                row.variant = std::string(to_string(v));
                row.r = r;
                row.k = k;
                row.n_evals = pairwise_sum(counts) / n;
                row.mean = mean;
                row.stderr_mean = std::sqrt(var / n);
                if (mode == RelMode::var) {
                    row.rel_error = var / (mean * mean);
                } else {
                    const double exact = *integrand.exact;
                    double se = 0.0;
                    for (double x : values) se += (x - exact) * (x - exact);
                    const double mse = se / n;
                    row.rel_error = mode == RelMode::mse ? mse / (exact * exact) : mse / std::abs(exact);
                }
                row.discarded = row.rel_error <= discard_threshold;
                row.slope_group = row.variant + "-r" + std::to_string(r);
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

double fit_slope(const std::vector<ResultRow>& rows) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& row : rows) {
        if (row.discarded || !(row.rel_error > 0.0) || !(row.n_evals > 0.0)) continue;
        xs.push_back(std::log(row.n_evals));
        ys.push_back(std::log(row.rel_error));
    }
    if (xs.size() < 3) throw DomainError("slope fit needs at least three usable rows");
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx == 0.0) throw DomainError("slope fit needs at least two distinct evaluation counts");
    return sxy / sxx;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << csv_header << '\n';
    for (const auto& row : rows) {
        out << row.variant << ',' << row.r << ',' << row.k << ',' << format_double(row.n_evals) << ','
            << format_double(row.rel_error) << ',' << (row.discarded ? "true" : "false") << ',' << row.slope_group
            << '\n';
    }
}

std::vector<ResultRow> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != csv_header) {
        throw DomainError(std::string("expected CSV header '") + csv_header + "'");
    }
    std::vector<ResultRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != 7) throw DomainError("line " + std::to_string(lineno) + ": expected 7 fields");
        ResultRow row;
        row.variant = cells[0];
        row.r = static_cast<int>(parse_number(cells[1], lineno));
        row.k = static_cast<int>(parse_number(cells[2], lineno));
        row.n_evals = parse_number(cells[3], lineno);
        row.rel_error = parse_number(cells[4], lineno);
        if (cells[5] != "true" && cells[5] != "false") {
            throw DomainError("line " + std::to_string(lineno) + ": discarded must be true or false");
        }
        row.discarded = cells[5] == "true";
        row.slope_group = cells[6];
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cubstrat

// Python bindings for the estimators, stencils, transform and experiment runner.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cubstrat/bench.hpp"
#include "cubstrat/errors.hpp"
#include "cubstrat/estimators.hpp"
#include "cubstrat/replicate.hpp"
#include "cubstrat/stencil.hpp"
#include "cubstrat/transform.hpp"

namespace py = pybind11;
using namespace cubstrat;

namespace {

py::array_t<double> to_array(std::span<const double> x) { return py::array_t<double>(x.size(), x.data()); }

// Accept a built-in integrand or any Python callable taking a 1-d array.
Integrand to_integrand(const py::object& f) {
    if (py::isinstance<BenchIntegrand>(f)) return f.cast<const BenchIntegrand&>().f;
    if (!PyCallable_Check(f.ptr())) throw py::type_error("integrand must be callable");
    auto fn = py::reinterpret_borrow<py::function>(f);
    return [fn](std::span<const double> x) {
        py::gil_scoped_acquire gil;
        return fn(to_array(x)).cast<double>();
    };
}

DerivativeOracle to_oracle(const py::object& f) {
    if (f.is_none()) return {};
    if (py::isinstance<BenchIntegrand>(f)) return f.cast<const BenchIntegrand&>().oracle;
    auto fn = py::reinterpret_borrow<py::function>(f);
    return [fn](std::span<const double> x, std::span<const int> alpha) {
        py::gil_scoped_acquire gil;
        return fn(to_array(x), std::vector<int>(alpha.begin(), alpha.end())).cast<double>();
    };
}

EstimateOptions options(bool block, bool keep_terms) {
    EstimateOptions o;
    o.block_stencils = block;
    o.keep_terms = keep_terms;
    return o;
}

ScaleConvention parse_scale(const std::string& name) {
    if (name == "chol-hessian") return ScaleConvention::cholesky_of_hessian;
    if (name == "chol-inverse-hessian") return ScaleConvention::cholesky_of_inverse_hessian;
    throw DomainError("unknown scale convention '" + name + "' (chol-hessian, chol-inverse-hessian)");
}

py::dict row_dict(const ResultRow& r) {
    py::dict d;
    d["variant"] = r.variant;
    d["r"] = r.r;
    d["k"] = r.k;
    d["n_evals"] = r.n_evals;
    d["rel_error"] = r.rel_error;
    d["discarded"] = r.discarded;
    d["slope_group"] = r.slope_group;
    d["mean"] = r.mean;
    d["stderr_mean"] = r.stderr_mean;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Stratified integration with finite-difference control variates";

    auto base = py::register_exception<Error>(m, "Error", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<StencilError>(m, "StencilError", base.ptr());
    py::register_exception<OrderError>(m, "OrderError", base.ptr());
    py::register_exception<ResolutionError>(m, "ResolutionError", base.ptr());
    py::register_exception<IncompleteEvaluationError>(m, "IncompleteEvaluationError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<AlignmentError>(m, "AlignmentError", base.ptr());
    py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
    py::register_exception<OptimizationError>(m, "OptimizationError", base.ptr());

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init<int, int, int>(), py::arg("s"), py::arg("k"), py::arg("m") = 0)
        .def_readonly("s", &GridSpec::s)
        .def_readonly("k", &GridSpec::k)
        .def_readonly("m", &GridSpec::m)
        .def_property_readonly("count", &GridSpec::count)
        .def("__repr__", [](const GridSpec& g) {
            return "GridSpec(s=" + std::to_string(g.s) + ", k=" + std::to_string(g.k) + ", m=" + std::to_string(g.m) + ")";
        });

    m.def("centres", [](const GridSpec& g) {
        std::vector<std::vector<double>> out;
        for (const auto& c : centres(g)) out.push_back(centre_point(g, c.j));
        return out;
    }, "Centre points in lexicographic order of their indices.");
    m.def("sample_offset", [](const GridSpec& g, std::vector<int> idx, std::uint64_t seed, std::uint64_t replicate) {
        return sample_offset(g, CentreIndex{std::move(idx)}, StreamKey{seed, replicate}).offset;
    }, py::arg("grid"), py::arg("index"), py::arg("seed"), py::arg("replicate") = 0);
    m.def("containing_centre", [](std::vector<double> x, const GridSpec& g) { return containing_centre(x, g).j; },
          py::arg("point"), py::arg("grid"));

    m.def("univariate_weights", [](std::vector<int> kappa, int a) { return univariate_weights(kappa, a).weights; },
          py::arg("offsets"), py::arg("order"));
    m.def("error_constant", [](int s, int r, int stencil_order, bool full_family) {
        return error_constant(s, r, {stencil_order, full_family});
    }, py::arg("s"), py::arg("r"), py::arg("stencil_order") = 0, py::arg("full_family") = false);
    m.def("stencil", [](std::vector<int> alpha, std::vector<int> centre, const GridSpec& g, int r, bool block) {
        const auto mode = block ? StencilMode::block(block_partition(g, r)) : StencilMode::free_nodes();
        const auto st = multivariate_stencil(MultiIndex{std::move(alpha)}, CentreIndex{std::move(centre)}, g, r, mode);
        std::vector<std::vector<int>> nodes;
        for (const auto& n : st.nodes) nodes.push_back(n.j);
        return py::make_tuple(nodes, st.weights, st.scale);
    }, py::arg("alpha"), py::arg("centre"), py::arg("grid"), py::arg("r"), py::arg("block") = false,
       "(nodes, weights, scale) of the stencil for D^alpha at a centre.");

    m.def("d_moment", &d_moment, py::arg("i"), py::arg("k"));
    m.def("lambda_coeffs", [](int r) {
        const auto c = lambda_coeffs(r);
        return py::make_tuple(c.lambdas, c.gammas, c.margin);
    }, py::arg("r"), "(lambdas, gammas, margin)");
    m.def("vanishing_grid", &vanishing_grid, py::arg("s"), py::arg("k"), py::arg("r"));

    py::enum_<Variant>(m, "Variant")
        .value("crude", Variant::crude)
        .value("haber1", Variant::haber1)
        .value("haber2", Variant::haber2)
        .value("star", Variant::star)
        .value("hat", Variant::hat)
        .value("tilde", Variant::tilde)
        .value("vanishing", Variant::vanishing);

    py::class_<EstimateReport>(m, "EstimateReport")
        .def_readonly("variant", &EstimateReport::variant)
        .def_readonly("r", &EstimateReport::r)
        .def_readonly("value", &EstimateReport::value)
        .def_readonly("n_deterministic", &EstimateReport::n_deterministic)
        .def_readonly("n_random", &EstimateReport::n_random)
        .def_readonly("n_in_domain", &EstimateReport::n_in_domain)
        .def_readonly("per_stratum_terms", &EstimateReport::per_stratum_terms)
        .def_readonly("normalizer", &EstimateReport::normalizer)
        .def_readonly("partial_averages", &EstimateReport::partial_averages)
        .def("__repr__", [](const EstimateReport& r) {
            return "EstimateReport(" + std::string(to_string(r.variant)) + ", r=" + std::to_string(r.r) +
                   ", value=" + py::repr(py::float_(r.value)).cast<std::string>() + ")";
        });

    m.def("estimate", [](py::object f, const std::string& variant, int r, int s, int k, std::uint64_t seed,
                         std::uint64_t replicate, bool block, bool keep_terms, py::object oracle) {
        EstimatorConfig cfg;
        cfg.variant = parse_variant(variant);
        cfg.r = r;
        cfg.grid = cfg.variant == Variant::vanishing ? vanishing_grid(s, k, r) : GridSpec(s, k);
        cfg.seed = seed;
        cfg.replicate = replicate;
        cfg.options = options(block, keep_terms);
        const auto fn = to_integrand(f);
        auto orc = to_oracle(oracle.is_none() && py::isinstance<BenchIntegrand>(f) ? f : oracle);
        return estimate(fn, cfg, orc ? &orc : nullptr);
    }, py::arg("f"), py::arg("variant"), py::arg("r"), py::arg("s"), py::arg("k"), py::arg("seed") = 0,
       py::arg("replicate") = 0, py::arg("block") = false, py::arg("keep_terms") = false, py::arg("oracle") = py::none(),
       "One run of an estimator on the grid with k strata per axis.");

    m.def("variance_estimate", [](const std::vector<EstimateReport>& reps) { return variance_estimate(reps); });
    m.def("pooled", [](const std::vector<EstimateReport>& reps) {
        const auto p = pooled(reps);
        return py::make_tuple(p.pooled_mean, p.v_hat, p.pooled_variance);
    }, "(pooled_mean, v_hat, pooled_variance)");
    m.def("tail_bound", &tail_bound, py::arg("delta"), py::arg("c_hat"), py::arg("norm_r"), py::arg("n"), py::arg("r"),
          py::arg("s"));
    m.def("select_order", [](py::object f, int r_max, int s, int k, std::size_t l, std::uint64_t seed) {
        const auto sel = select_order(to_integrand(f), r_max, s, k, l, seed);
        py::dict per;
        for (const auto& [order, res] : sel.summary.per_order) {
            per[py::int_(order)] = py::make_tuple(res.values, res.pooled_mean, res.v_hat);
        }
        return py::make_tuple(sel.best_order, per, sel.evaluations);
    }, py::arg("f"), py::arg("r_max"), py::arg("s"), py::arg("k"), py::arg("l"), py::arg("seed") = 0,
       "(best_order, {order: (values, pooled_mean, v_hat)}, evaluations)");
    m.def("asymptotic_variance_estimate", [](int s, py::object oracle, int r, std::size_t budget, std::uint64_t seed) {
        AsymptoticVarianceOptions o;
        o.budget = budget;
        o.seed = seed;
        return asymptotic_variance_estimate(s, to_oracle(oracle), r, o);
    }, py::arg("s"), py::arg("oracle"), py::arg("r"), py::arg("budget") = 2000, py::arg("seed") = 0);

    m.def("psi", [](std::vector<double> u, double tau) { return psi(u, tau); }, py::arg("u"), py::arg("tau") = default_tau);
    m.def("jacobian_factor", [](std::vector<double> u, double tau) { return jacobian_factor(u, tau); }, py::arg("u"),
          py::arg("tau") = default_tau);

    py::class_<BenchIntegrand>(m, "Integrand")
        .def_readonly("name", &BenchIntegrand::name)
        .def_readonly("s", &BenchIntegrand::s)
        .def_readonly("exact", &BenchIntegrand::exact)
        .def_readonly("vanishing", &BenchIntegrand::vanishing)
        .def("__call__", [](const BenchIntegrand& b, std::vector<double> x) { return b.f(x); });
    m.def("wrap", [](py::object g, double tau) {
        BenchIntegrand out;
        out.name = "wrapped";
        out.f = wrap(to_integrand(g), tau);
        out.vanishing = true;
        return out;
    }, py::arg("g"), py::arg("tau") = default_tau, "u -> g(psi(u)) * jacobian_factor(u), 0 on the boundary.");
    m.def("test_function", &test_function, py::arg("s"));
    m.def("quadratic_integrand", &quadratic_integrand, py::arg("s"));
    m.def("wrapped_gaussian", &wrapped_gaussian, py::arg("s"), py::arg("tau") = default_tau);
    m.def("bump", &bump, py::arg("s"), py::arg("p"));
    m.def("logistic_marginal_likelihood", [](const std::string& path, int s, const std::string& scale, double prior_sd,
                                             double tau, int label_column, bool standardize) {
        LogisticOptions o(parse_scale(scale));
        o.prior_sd = prior_sd;
        o.tau = tau;
        return logistic_marginal_likelihood(read_logistic_csv(path, label_column, standardize), s, o);
    }, py::arg("path"), py::arg("s"), py::arg("scale"), py::arg("prior_sd") = 5.0, py::arg("tau") = default_tau,
       py::arg("label_column") = -1, py::arg("standardize") = false);

    m.def("run", [](const std::string& fn, int dim, std::vector<std::string> variants, std::vector<int> r,
                    std::vector<int> k, int reps, std::uint64_t seed, const std::string& rel_mode, bool block,
                    double tau, int bump_power) {
        ExperimentConfig cfg;
        cfg.fn = fn;
        cfg.dim = dim;
        cfg.variants.clear();
        for (const auto& v : variants) cfg.variants.push_back(parse_variant(v));
        cfg.r_values = std::move(r);
        cfg.k_values = std::move(k);
        cfg.reps = reps;
        cfg.seed = seed;
        cfg.rel_mode = parse_rel_mode(rel_mode);
        cfg.block_stencils = block;
        cfg.tau = tau;
        cfg.bump_power = bump_power;
        py::list rows;
        for (const auto& row : run(cfg)) rows.append(row_dict(row));
        return rows;
    }, py::arg("fn"), py::arg("dim") = 1, py::arg("variants") = std::vector<std::string>{"haber1"},
       py::arg("r") = std::vector<int>{1}, py::arg("k") = std::vector<int>{4, 8, 16}, py::arg("reps") = 50,
       py::arg("seed") = 1, py::arg("rel_mode") = "auto", py::arg("block") = false, py::arg("tau") = default_tau,
       py::arg("bump_power") = 4, "Experiment ladder; one dict per (variant, r, k) row.");
    m.def("fit_slope", [](const std::vector<py::dict>& rows) {
        std::vector<ResultRow> rs;
        for (const auto& d : rows) {
            ResultRow r;
            r.n_evals = d["n_evals"].cast<double>();
            r.rel_error = d["rel_error"].cast<double>();
            r.discarded = d.contains("discarded") && d["discarded"].cast<bool>();
            rs.push_back(r);
        }
        return fit_slope(rs);
    }, py::arg("rows"));
}

#include "cubstrat/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <string>
#include <tuple>

#include "cubstrat/errors.hpp"

namespace cubstrat {

namespace {

using i128 = __int128;

i128 abs128(i128 v) { return v < 0 ? -v : v; }

i128 gcd128(i128 a, i128 b) {
    a = abs128(a);
    b = abs128(b);
    while (b != 0) {
        const i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

double ratio_to_double(i128 num, i128 den) {
    if (den < 0) {
        num = -num;
        den = -den;
    }
    if (num == 0) return 0.0;
    const i128 g = gcd128(num, den);
    num /= g;
    den /= g;
    constexpr i128 exact = i128(1) << 53;
    if (abs128(num) <= exact && den <= exact) {
        return static_cast<double>(static_cast<long long>(num)) / static_cast<double>(static_cast<long long>(den));
    }
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

i128 factorial128(int n) {
    i128 f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// Contiguous windows of `len` offsets containing 0, one per shift.
std::vector<std::vector<int>> contiguous_patterns(int len) {
    std::vector<std::vector<int>> out;
    for (int start = -(len - 1); start <= 0; ++start) {
        std::vector<int> p(static_cast<std::size_t>(len));
        std::iota(p.begin(), p.end(), start);
        out.push_back(std::move(p));
    }
    return out;
}

// Every len-subset of {-(len-1), ..., len-1}.
std::vector<std::vector<int>> full_patterns(int len) {
    std::vector<std::vector<int>> out;
    const int pool = 2 * len - 1;
    std::vector<int> pick(static_cast<std::size_t>(len));
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
        std::vector<int> p(pick.size());
        for (std::size_t i = 0; i < pick.size(); ++i) p[i] = pick[i] - (len - 1);
        out.push_back(std::move(p));
        int i = len - 1;
        while (i >= 0 && pick[static_cast<std::size_t>(i)] == pool - len + i) --i;
        if (i < 0) break;
        ++pick[static_cast<std::size_t>(i)];
        for (int q = i + 1; q < len; ++q) pick[static_cast<std::size_t>(q)] = pick[static_cast<std::size_t>(q - 1)] + 1;
    }
    return out;
}

// Cache of window stencils keyed by (first offset, length, order).
class WindowCache {
public:
    const UnivariateStencil& get(int start, int len, int order) {
        const auto key = std::make_tuple(start, len, order);
        {
            std::shared_lock lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        std::vector<int> offsets(static_cast<std::size_t>(len));
        std::iota(offsets.begin(), offsets.end(), start);
        auto stencil = univariate_weights(offsets, order);
        std::unique_lock lock(mutex_);
        return cache_.try_emplace(key, std::move(stencil)).first->second;
    }

private:
    std::shared_mutex mutex_;
    std::map<std::tuple<int, int, int>, UnivariateStencil> cache_;
};

WindowCache& window_cache() {
    static WindowCache cache;
    return cache;
}

}  // namespace

int MultiIndex::order() const noexcept { return std::accumulate(alpha.begin(), alpha.end(), 0); }

int MultiIndex::support() const noexcept {
    return static_cast<int>(std::count_if(alpha.begin(), alpha.end(), [](int a) { return a != 0; }));
}

double MultiIndex::factorial() const noexcept {
    double f = 1.0;
    for (int a : alpha) {
        for (int i = 2; i <= a; ++i) f *= i;
    }
    return f;
}

std::vector<MultiIndex> multi_indices(int s, int order) {
    std::vector<MultiIndex> out;
    if (s < 1 || order < 0) return out;
    std::vector<int> a(static_cast<std::size_t>(s), 0);
    // recursive fill of the remaining budget, first axis largest first
    auto fill = [&](auto&& self, int axis, int remaining) -> void {
        if (axis == s - 1) {
            a[static_cast<std::size_t>(axis)] = remaining;
            out.push_back(MultiIndex{a});
            return;
        }
        for (int v = remaining; v >= 0; --v) {
            a[static_cast<std::size_t>(axis)] = v;
            self(self, axis + 1, remaining - v);
        }
    };
    fill(fill, 0, order);
    return out;
}

std::vector<double> vandermonde_weights(std::span<const int> nodes, int a) {
    const auto l = static_cast<int>(nodes.size());
    if (a < 0 || a >= l) {
        throw OrderError("derivative order " + std::to_string(a) + " needs more than " + std::to_string(l) +
                         " nodes");
    }
    for (int i = 0; i < l; ++i) {
        for (int q = i + 1; q < l; ++q) {
            if (nodes[static_cast<std::size_t>(i)] == nodes[static_cast<std::size_t>(q)]) {
                throw StencilError("stencil nodes must be pairwise distinct");
            }
        }
    }
    const i128 afact = factorial128(a);
    std::vector<double> w(static_cast<std::size_t>(l));
    std::vector<i128> poly;
    for (int j = 0; j < l; ++j) {
        // coefficients of prod_{i != j} (x - x_i), lowest degree first
        poly.assign(1, 1);
        i128 den = 1;
        const i128 xj = nodes[static_cast<std::size_t>(j)];
        for (int i = 0; i < l; ++i) {
            if (i == j) continue;
            const i128 xi = nodes[static_cast<std::size_t>(i)];
            poly.push_back(0);
            for (std::size_t d = poly.size() - 1; d > 0; --d) poly[d] = poly[d - 1] - xi * poly[d];
            poly[0] = -xi * poly[0];
            den *= (xj - xi);
        }
        w[static_cast<std::size_t>(j)] = ratio_to_double(poly[static_cast<std::size_t>(a)] * afact, den);
    }
    return w;
}

UnivariateStencil univariate_weights(std::span<const int> kappa, int a) {
    if (a < 1) throw OrderError("derivative order must be at least 1");
    UnivariateStencil out;
    out.weights = vandermonde_weights(kappa, a);
    out.offsets.assign(kappa.begin(), kappa.end());
    out.order = a;
    return out;
}

BlockAssignment::BlockAssignment(int s, int k, int side) : s_(s), k_(k), side_(side) {
    if (side < 1) throw DomainError("block side must be positive");
    if (k < side) {
        throw ResolutionError("k = " + std::to_string(k) + " is smaller than the block side " + std::to_string(side));
    }
    per_axis_ = (k + side - 1) / side;
}

std::size_t BlockAssignment::block_count() const noexcept {
    std::size_t n = 1;
    for (int i = 0; i < s_; ++i) n *= static_cast<std::size_t>(per_axis_);
    return n;
}

int BlockAssignment::axis_block(int j) const noexcept { return std::min(j / side_, per_axis_ - 1); }

int BlockAssignment::axis_start(int b) const noexcept { return std::min(b * side_, k_ - side_); }

std::size_t BlockAssignment::block_of(std::span<const int> idx) const {
    std::size_t q = 0;
    for (int j : idx) {
        if (j < 0 || j >= k_) throw DomainError("centre outside the unit cube has no block");
        q = q * static_cast<std::size_t>(per_axis_) + static_cast<std::size_t>(axis_block(j));
    }
    return q;
}

BlockAssignment block_partition(const GridSpec& grid, int r) {
    if (grid.m != 0) throw PreconditionError("block partition requires a grid without margin");
    return BlockAssignment(grid.s, grid.k, r);
}

int window_start(int j, int lo, int hi, int window) noexcept {
    int start = j - window / 2;
    start = std::max(start, lo);
    return std::min(start, hi - window + 1);
}

const UnivariateStencil& cached_window_stencil(int start, int len, int order) {
    return window_cache().get(start, len, order);
}

std::vector<int> select_axis_nodes(const CentreIndex& centre, int axis, const GridSpec& grid, int window,
                                   const StencilMode& mode) {
    if (window < 2) throw OrderError("stencil window must contain at least two nodes");
    if (axis < 0 || axis >= grid.s) throw DomainError("axis out of range");
    const int j = centre.j[static_cast<std::size_t>(axis)];
    int lo = grid.lowest();
    int hi = grid.highest();
    if (mode.is_block()) {
        const auto& blocks = mode.blocks();
        lo = blocks.axis_start(blocks.axis_block(j));
        hi = lo + blocks.side() - 1;
    }
    if (hi - lo + 1 < window) {
        throw ResolutionError("only " + std::to_string(hi - lo + 1) + " grid points available for a window of " +
                              std::to_string(window));
    }
    const int start = window_start(j, lo, hi, window);
    std::vector<int> offsets(static_cast<std::size_t>(window));
    std::iota(offsets.begin(), offsets.end(), start - j);
    return offsets;
}

Stencil multivariate_stencil(const MultiIndex& alpha, const CentreIndex& centre, const GridSpec& grid, int r,
                             const StencilMode& mode) {
    if (alpha.alpha.size() != static_cast<std::size_t>(grid.s) || centre.j.size() != alpha.alpha.size()) {
        throw DomainError("multi-index, centre and grid dimensions differ");
    }
    const int total = alpha.order();
    if (total >= r) {
        throw OrderError("|alpha| = " + std::to_string(total) + " must be below r = " + std::to_string(r));
    }
    Stencil out;
    out.alpha = alpha;
    out.scale = std::pow(static_cast<double>(grid.k), total);
    out.nodes.push_back(centre);
    out.weights.push_back(1.0);

    int consumed = 0;
    for (int p = 0; p < grid.s; ++p) {
        const int a = alpha.alpha[static_cast<std::size_t>(p)];
        if (a == 0) continue;
        const int window = r - consumed;
        const auto offsets = select_axis_nodes(centre, p, grid, window, mode);
        const auto& uni = cached_window_stencil(offsets.front(), window, a);
        std::vector<CentreIndex> nodes;
        std::vector<double> weights;
        nodes.reserve(out.nodes.size() * uni.size());
        weights.reserve(nodes.capacity());
        for (std::size_t q = 0; q < out.nodes.size(); ++q) {
            for (std::size_t t = 0; t < uni.size(); ++t) {
                CentreIndex node = out.nodes[q];
                node.j[static_cast<std::size_t>(p)] += uni.offsets[t];
                nodes.push_back(std::move(node));
                weights.push_back(out.weights[q] * uni.weights[t]);
            }
        }
        out.nodes = std::move(nodes);
        out.weights = std::move(weights);
        consumed += a;
    }
    return out;
}

CentreValues::CentreValues(const GridSpec& grid)
    : grid_(grid), values_(grid.count(), 0.0), present_(grid.count(), false) {}

void CentreValues::set(std::span<const int> idx, double value) {
    if (!in_grid(grid_, idx)) throw DomainError("centre outside the grid");
    const auto flat = flatten(grid_, idx);
    values_[flat] = value;
    present_[flat] = true;
}

bool CentreValues::contains(std::span<const int> idx) const noexcept {
    return in_grid(grid_, idx) && present_[flatten(grid_, idx)];
}

double CentreValues::at(std::span<const int> idx) const {
    if (!contains(idx)) throw IncompleteEvaluationError("no function value at a stencil node");
    return values_[flatten(grid_, idx)];
}

double apply(const Stencil& stencil, const CentreValues& values) {
    double acc = 0.0;
    for (std::size_t q = 0; q < stencil.size(); ++q) acc += stencil.weights[q] * values.at(stencil.nodes[q].j);
    return stencil.scale * acc;
}

double error_constant(int s, int r, const ErrorConstantOptions& options) {
    if (s < 1 || r < 1) throw DomainError("error_constant needs s >= 1 and r >= 1");
    const int order = options.stencil_order == 0 ? r : options.stencil_order;
    if (order < r) throw OrderError("stencil order must be at least r");

    // Per (window, smoothness, derivative order): max sum |w kappa^p| and max sum |w|.
    std::map<std::tuple<int, int, int>, std::pair<double, double>> axis_constants;
    auto axis_constant = [&](int window, int smooth, int a) {
        const auto key = std::make_tuple(window, smooth, a);
        if (auto it = axis_constants.find(key); it != axis_constants.end()) return it->second;
        const auto patterns = options.full_family ? full_patterns(window) : contiguous_patterns(window);
        double moment = 0.0;
        double mass = 0.0;
        for (const auto& kappa : patterns) {
            const auto w = vandermonde_weights(kappa, a);
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) {
                m1 += std::abs(w[j] * std::pow(static_cast<double>(kappa[j]), smooth));
                m2 += std::abs(w[j]);
            }
            moment = std::max(moment, m1);
            mass = std::max(mass, m2);
        }
        return axis_constants[key] = {moment, mass};
    };

    double worst = 0.0;
    double inv_fact_below = 0.0;
    for (int l = 1; l <= r - 1; ++l) {
        for (const auto& alpha : multi_indices(s, l)) {
            inv_fact_below += 1.0 / alpha.factorial();
            double c = 0.0;
            int consumed = 0;
            for (int a : alpha.alpha) {
                if (a == 0) continue;
                const auto [moment, mass] = axis_constant(order - consumed, r - consumed, a);
                c = moment + mass * c;
                consumed += a;
            }
            worst = std::max(worst, c);
        }
    }
    double inv_fact_top = 0.0;
    for (const auto& alpha : multi_indices(s, r)) inv_fact_top += 1.0 / alpha.factorial();
    return 2.0 * worst * inv_fact_below + std::pow(2.0, 1 - r) * inv_fact_top;
}

}  // namespace cubstrat

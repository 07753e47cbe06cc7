#pragma once

// Finite-difference stencils on the stratification grid.
//
// A derivative D^alpha f(c) is approximated by k^|alpha| * sum_j w_j f(c_j)
// where the c_j are grid centres close to c. Stencils are built one axis at a
// time: the first active axis (ascending index) uses a window of r nodes, each
// following axis uses r minus the derivative order already consumed. Weights
// only depend on the integer offset pattern, never on k.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cubstrat/lattice.hpp"

namespace cubstrat {

/// Multi-index alpha in N_0^s.
struct MultiIndex {
    std::vector<int> alpha;

    int order() const noexcept;        ///< |alpha|
    int support() const noexcept;      ///< |alpha|_0, number of non-zero entries
    double factorial() const noexcept; ///< alpha! = prod alpha_i!

    friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;
    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

/// All multi-indices of dimension s and total order `order`, lexicographically
/// descending (e.g. (2,0), (1,1), (0,2)).
std::vector<MultiIndex> multi_indices(int s, int order);

/// One-dimensional stencil: sum_j weights[j] g(x + offsets[j] h) ~ h^order g^(order)(x).
struct UnivariateStencil {
    std::vector<int> offsets;
    std::vector<double> weights;
    int order = 0;

    std::size_t size() const noexcept { return offsets.size(); }
};

/// Solve sum_j w_j x_j^i = a! [i == a] for i = 0..l-1 (l = nodes.size()).
///
/// The weights are a! times the x^a coefficient of the Lagrange basis
/// polynomials; numerators and denominators are integers and are formed
/// exactly, so each weight carries a single rounding. Accepts a = 0 (used for
/// extrapolation coefficients). Throws StencilError on duplicate nodes and
/// OrderError when a >= l.
std::vector<double> vandermonde_weights(std::span<const int> nodes, int a);

/// Weights for the a-th derivative on distinct integer nodes kappa (1 <= a <= l-1).
UnivariateStencil univariate_weights(std::span<const int> kappa, int a);

/// Tiling of the index range {0..k-1}^s into blocks of `side` consecutive
/// indices per axis. When side does not divide k the last block on each axis
/// is anchored at the upper boundary and overlaps its neighbour; overlapped
/// centres belong to the lower block.
class BlockAssignment {
public:
    BlockAssignment(int s, int k, int side);

    int dimension() const noexcept { return s_; }
    int resolution() const noexcept { return k_; }
    int side() const noexcept { return side_; }
    int blocks_per_axis() const noexcept { return per_axis_; }
    std::size_t block_count() const noexcept;

    /// Block coordinate of index j along one axis.
    int axis_block(int j) const noexcept;
    /// First index covered by block coordinate b.
    int axis_start(int b) const noexcept;
    /// Flat block id q(c).
    std::size_t block_of(std::span<const int> idx) const;

private:
    int s_;
    int k_;
    int side_;
    int per_axis_;
};

/// Blocks of r^s contiguous cubes covering the m = 0 grid. Requires k >= r.
BlockAssignment block_partition(const GridSpec& grid, int r);

/// Free stencils use the whole grid; block stencils stay inside q(c).
class StencilMode {
public:
    static StencilMode free_nodes() { return StencilMode(); }
    static StencilMode block(BlockAssignment blocks) { return StencilMode(std::move(blocks)); }

    bool is_block() const noexcept { return blocks_.has_value(); }
    const BlockAssignment& blocks() const { return *blocks_; }

private:
    StencilMode() = default;
    explicit StencilMode(BlockAssignment b) : blocks_(std::move(b)) {}
    std::optional<BlockAssignment> blocks_;
};

/// First index of a `window`-long run of indices in [lo, hi] around j: centred
/// when possible (ties toward lower indices), shifted minimally otherwise.
/// Assumes hi - lo + 1 >= window.
int window_start(int j, int lo, int hi, int window) noexcept;

/// Window stencil on offsets start..start+len-1 for derivative `order`,
/// memoised process-wide (thread-safe).
const UnivariateStencil& cached_window_stencil(int start, int len, int order);

/// `window` distinct integer offsets along `axis` around `centre`. Centred when
/// possible (ties toward negative offsets), otherwise shifted by the minimum
/// amount that keeps every node inside the grid (free mode) or inside the
/// centre's block (block mode). Throws ResolutionError if the admissible range
/// is shorter than the window.
std::vector<int> select_axis_nodes(const CentreIndex& centre, int axis, const GridSpec& grid,
                                   int window, const StencilMode& mode);

/// Multivariate stencil for D^alpha at a centre.
struct Stencil {
    std::vector<CentreIndex> nodes;
    std::vector<double> weights;
    MultiIndex alpha;
    double scale = 1.0;  ///< k^|alpha|

    std::size_t size() const noexcept { return nodes.size(); }
};

/// Tensor-product stencil for D^alpha f(c) with accuracy k^-(r-|alpha|).
/// Throws OrderError when |alpha| >= r and ResolutionError when the grid is too
/// small for the first window.
Stencil multivariate_stencil(const MultiIndex& alpha, const CentreIndex& centre, const GridSpec& grid,
                             int r, const StencilMode& mode = StencilMode::free_nodes());

/// Sparse set of known function values at grid centres.
class CentreValues {
public:
    explicit CentreValues(const GridSpec& grid);

    const GridSpec& grid() const noexcept { return grid_; }
    void set(std::span<const int> idx, double value);
    bool contains(std::span<const int> idx) const noexcept;
    /// Throws IncompleteEvaluationError when the value is missing.
    double at(std::span<const int> idx) const;

    /// Evaluate f at every centre of the grid.
    template <class F>
    static CentreValues tabulate(const GridSpec& grid, F&& f) {
        CentreValues out(grid);
        for (const auto& c : centres(grid)) {
            const auto x = centre_point(grid, c.j);
            out.set(c.j, f(std::span<const double>(x)));
        }
        return out;
    }

private:
    GridSpec grid_;
    std::vector<double> values_;
    std::vector<bool> present_;
};

/// k^|alpha| sum_j w_j f(c_j).
double apply(const Stencil& stencil, const CentreValues& values);

struct ErrorConstantOptions {
    /// Window size of the first stencil axis; 0 means r. Must be >= r.
    int stencil_order = 0;
    /// Maximise over every offset pattern in {-(l-1),...,l-1} rather than the
    /// contiguous windows that select_axis_nodes can produce.
    bool full_family = false;
};

/// Constant C such that every stratum term of the control-variate estimators
/// deviates from its mean by at most C ||f||_r k^-r.
double error_constant(int s, int r, const ErrorConstantOptions& options = {});

}  // namespace cubstrat

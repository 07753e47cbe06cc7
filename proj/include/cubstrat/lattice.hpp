#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <span>
#include <vector>

#include "cubstrat/rng.hpp"

namespace cubstrat {

/// Cubic stratification of [-m/k, 1+m/k]^s into (k+2m)^s hypercubes of side 1/k.
struct GridSpec {
    int s = 1;  ///< dimension
    int k = 1;  ///< strata per axis inside the unit cube
    int m = 0;  ///< margin layers on each side

    GridSpec() = default;
    GridSpec(int dim, int strata, int margin = 0);

    int side() const noexcept { return k + 2 * m; }
    int lowest() const noexcept { return -m; }
    int highest() const noexcept { return k + m - 1; }
    std::size_t count() const noexcept { return count_; }

    /// Coordinate (2j+1)/(2k) of index j along one axis.
    double coordinate(int j) const noexcept { return (2.0 * j + 1.0) / (2.0 * k); }

    friend bool operator==(const GridSpec& a, const GridSpec& b) noexcept {
        return a.s == b.s && a.k == b.k && a.m == b.m;
    }

private:
    std::size_t count_ = 1;
};

/// Integer label j of a centre; c_i = (2 j_i + 1) / (2k).
struct CentreIndex {
    std::vector<int> j;

    friend auto operator<=>(const CentreIndex&, const CentreIndex&) = default;
    friend bool operator==(const CentreIndex&, const CentreIndex&) = default;
};

/// Random offset U_c inside [-1/2k, 1/2k]^s.
struct StratumSample {
    std::vector<double> offset;
};

/// Lexicographic position of `idx` inside `grid` (first axis most significant).
std::size_t flatten(const GridSpec& grid, std::span<const int> idx);

/// Inverse of flatten; writes into `out` (size s).
void unflatten(const GridSpec& grid, std::size_t flat, std::span<int> out);

/// Physical coordinates of a centre.
std::vector<double> centre_point(const GridSpec& grid, std::span<const int> idx);

bool in_grid(const GridSpec& grid, std::span<const int> idx) noexcept;

/// Lazy, lexicographically ordered view over all centre indices of a grid.
class CentreRange {
public:
    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = CentreIndex;
        using difference_type = std::ptrdiff_t;
        using reference = const CentreIndex&;
        using pointer = const CentreIndex*;

        iterator() = default;
        iterator(const GridSpec* grid, std::size_t pos);

        reference operator*() const noexcept { return current_; }
        pointer operator->() const noexcept { return &current_; }
        iterator& operator++();
        iterator operator++(int) {
            auto tmp = *this;
            ++*this;
            return tmp;
        }
        friend bool operator==(const iterator& a, const iterator& b) noexcept { return a.pos_ == b.pos_; }

    private:
        const GridSpec* grid_ = nullptr;
        std::size_t pos_ = 0;
        CentreIndex current_;
    };

    explicit CentreRange(const GridSpec& grid) : grid_(grid) {}

    iterator begin() const { return iterator(&grid_, 0); }
    iterator end() const { return iterator(&grid_, grid_.count()); }
    std::size_t size() const noexcept { return grid_.count(); }

private:
    GridSpec grid_;
};

/// All centres of the grid, in lexicographic order of their index vectors.
inline CentreRange centres(const GridSpec& grid) { return CentreRange(grid); }

/// Stream id of the stratum labelled `idx`. Depends on the index vector only,
/// so the same cube draws the same offset whatever the margin of the grid.
inline std::uint64_t stratum_stream_id(std::span<const int> idx) noexcept {
    return hash_ints(idx, 0x5354524154ULL);
}

/// Draw U_c for the stratum `idx` of `grid`. Writes s coordinates into `out`.
void sample_offset(const GridSpec& grid, std::span<const int> idx, const StreamKey& key,
                   std::span<double> out);

StratumSample sample_offset(const GridSpec& grid, const CentreIndex& idx, const StreamKey& key);

/// Index of the closed cube containing `point`; ties go to the lower index.
/// Throws DomainError when the point lies outside [-m/k, 1+m/k]^s.
CentreIndex containing_centre(std::span<const double> point, const GridSpec& grid);

}  // namespace cubstrat

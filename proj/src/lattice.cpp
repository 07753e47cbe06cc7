#include "cubstrat/lattice.hpp"

#include <cmath>
#include <string>

#include "cubstrat/errors.hpp"

namespace cubstrat {

GridSpec::GridSpec(int dim, int strata, int margin) : s(dim), k(strata), m(margin) {
    if (s < 1) throw DomainError("grid dimension must be positive");
    if (k < 1) throw DomainError("grid resolution k must be at least 1");
    if (m < 0) throw DomainError("grid margin must be non-negative");
    count_ = 1;
    for (int i = 0; i < s; ++i) count_ *= static_cast<std::size_t>(side());
}

std::size_t flatten(const GridSpec& grid, std::span<const int> idx) {
    std::size_t flat = 0;
    const auto side = static_cast<std::size_t>(grid.side());
    for (int v : idx) flat = flat * side + static_cast<std::size_t>(v + grid.m);
    return flat;
}

void unflatten(const GridSpec& grid, std::size_t flat, std::span<int> out) {
    const auto side = static_cast<std::size_t>(grid.side());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = static_cast<int>(flat % side) - grid.m;
        flat /= side;
    }
}

std::vector<double> centre_point(const GridSpec& grid, std::span<const int> idx) {
    std::vector<double> c(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) c[i] = grid.coordinate(idx[i]);
    return c;
}

bool in_grid(const GridSpec& grid, std::span<const int> idx) noexcept {
    if (idx.size() != static_cast<std::size_t>(grid.s)) return false;
    for (int v : idx) {
        if (v < grid.lowest() || v > grid.highest()) return false;
    }
    return true;
}

CentreRange::iterator::iterator(const GridSpec* grid, std::size_t pos) : grid_(grid), pos_(pos) {
    current_.j.assign(static_cast<std::size_t>(grid->s), 0);
    if (pos_ < grid_->count()) unflatten(*grid_, pos_, current_.j);
}

CentreRange::iterator& CentreRange::iterator::operator++() {
    ++pos_;
    // odometer increment, last axis fastest
    for (std::size_t i = current_.j.size(); i-- > 0;) {
        if (++current_.j[i] <= grid_->highest()) break;
        current_.j[i] = grid_->lowest();
    }
    return *this;
}

void sample_offset(const GridSpec& grid, std::span<const int> idx, const StreamKey& key,
                   std::span<double> out) {
    Substream stream(key, stratum_stream_id(idx));
    const double inv_k = 1.0 / grid.k;
    for (auto& u : out) u = (stream.uniform() - 0.5) * inv_k;
}

StratumSample sample_offset(const GridSpec& grid, const CentreIndex& idx, const StreamKey& key) {
    StratumSample out;
    out.offset.resize(idx.j.size());
    sample_offset(grid, idx.j, key, out.offset);
    return out;
}

CentreIndex containing_centre(std::span<const double> point, const GridSpec& grid) {
    if (point.size() != static_cast<std::size_t>(grid.s)) {
        throw DomainError("point has " + std::to_string(point.size()) + " coordinates, grid has " +
                          std::to_string(grid.s));
    }
    const double lo = -static_cast<double>(grid.m) / grid.k;
    const double hi = 1.0 + static_cast<double>(grid.m) / grid.k;
    CentreIndex out;
    out.j.resize(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double x = point[i];
        if (!(x >= lo && x <= hi)) throw DomainError("point outside the stratified region");
        int j = static_cast<int>(std::ceil(x * grid.k)) - 1;
        if (j < grid.lowest()) j = grid.lowest();
        if (j > grid.highest()) j = grid.highest();
        out.j[i] = j;
    }
    return out;
}

}  // namespace cubstrat

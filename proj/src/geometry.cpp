#include "sagp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "sagp/error.hpp"

namespace sagp {

void GridSpec::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw Error(ErrorKind::InvalidArgument, "grid cell_size must be positive");
  }
  if (nx < 1 || ny < 1) {
    throw Error(ErrorKind::InvalidArgument, "grid nx and ny must be >= 1");
  }
  if (!origin.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "grid origin must be finite");
  }
  if (size() > std::numeric_limits<CellIndex>::max()) {
    throw Error(ErrorKind::InvalidArgument, "grid has too many cells");
  }
}

Eigen::Vector2d GridSpec::center(CellIndex i) const {
  return origin + Eigen::Vector2d(col(i) + 0.5, row(i) + 0.5) * cell_size;
}

CellIndex GridSpec::nearest_cell(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d local = (p - origin) / cell_size;
  const int c = std::clamp(static_cast<int>(std::floor(local.x())), 0, nx - 1);
  const int r = std::clamp(static_cast<int>(std::floor(local.y())), 0, ny - 1);
  return index(c, r);
}

void Region::validate() const {
  if (cells.empty()) {
    throw Error(ErrorKind::EmptyRegion, "region '" + region_id + "' has no cells");
  }
  std::vector<CellIndex> sorted = cells;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorKind::InvalidArgument, "region '" + region_id + "' has duplicate cells");
  }
  if (cell_weights) {
    if (cell_weights->size() != cells.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "region '" + region_id + "' cell_weights length differs from cells");
    }
    double total = 0.0;
    for (double w : *cell_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::InvalidArgument,
                    "region '" + region_id + "' has a negative or non-finite weight");
      }
      total += w;
    }
    if (!(total > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "region '" + region_id + "' weights sum to zero");
    }
  }
}

AggregationScheme parse_scheme(std::string_view text) {
  if (text == "average") return AggregationScheme::Average;
  if (text == "sum") return AggregationScheme::Sum;
  if (text == "weighted-average") return AggregationScheme::WeightedAverage;
  throw Error(ErrorKind::ParseError, "unknown aggregation scheme '" + std::string(text) + "'");
}

const char* to_string(AggregationScheme scheme) {
  switch (scheme) {
    case AggregationScheme::Average: return "average";
    case AggregationScheme::Sum: return "sum";
    case AggregationScheme::WeightedAverage: return "weighted-average";
  }
  return "average";
}

void PolygonGeometry::normalize() {
  if (rings.empty()) {
    throw Error(ErrorKind::InvalidArgument, "polygon '" + region_id + "' has no rings");
  }
  for (auto& ring : rings) {
    if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
    if (ring.size() < 4) {
      throw Error(ErrorKind::InvalidArgument,
                  "polygon '" + region_id + "' has a ring with fewer than 3 vertices");
    }
    for (const auto& v : ring) {
      if (!v.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "polygon '" + region_id + "' has a non-finite vertex");
      }
    }
  }
}

Region rasterize(const PolygonGeometry& poly, const GridSpec& grid,
                 const RasterizeOptions& options) {
  grid.validate();
  PolygonGeometry closed = poly;
  closed.normalize();

  // Work in grid-local units where cell (c, r) has its center at (c + 0.5, r + 0.5).
  struct Edge {
    Eigen::Vector2d a, b;
  };
  std::vector<Edge> edges;
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  Eigen::Vector2d vertex_sum = Eigen::Vector2d::Zero();
  std::size_t vertex_count = 0;
  for (const auto& ring : closed.rings) {
    for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
      const Eigen::Vector2d a = (ring[k] - grid.origin) / grid.cell_size;
      const Eigen::Vector2d b = (ring[k + 1] - grid.origin) / grid.cell_size;
      edges.push_back({a, b});
      vmin = std::min(vmin, a.y());
      vmax = std::max(vmax, a.y());
      vertex_sum += ring[k];
      ++vertex_count;
    }
  }

  Region region;
  region.region_id = poly.region_id;
  const int row_lo = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
  const int row_hi = std::min(grid.ny - 1, static_cast<int>(std::ceil(vmax - 0.5)));
  std::vector<double> xs;
  for (int r = row_lo; r <= row_hi; ++r) {
    const double py = r + 0.5;
    xs.clear();
    for (const auto& e : edges) {
      if ((e.a.y() > py) != (e.b.y() > py)) {
        xs.push_back(e.a.x() + (py - e.a.y()) * (e.b.x() - e.a.x()) / (e.b.y() - e.a.y()));
      }
    }
    std::sort(xs.begin(), xs.end());
    // A center px is inside iff an odd number of crossings lie strictly to its right,
    // i.e. px falls in [xs[2k], xs[2k+1]).
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const double x0 = xs[k];
      const double x1 = xs[k + 1];
      int c = std::max(0, static_cast<int>(std::floor(x0 - 0.5)) - 1);
      for (; c < grid.nx; ++c) {
        const double px = c + 0.5;
        if (px >= x1) break;
        if (px >= x0) region.cells.push_back(grid.index(c, r));
      }
    }
  }
  std::sort(region.cells.begin(), region.cells.end());
  region.cells.erase(std::unique(region.cells.begin(), region.cells.end()), region.cells.end());

  if (region.cells.empty()) {
    if (!options.snap_to_nearest) {
      throw Error(ErrorKind::EmptyRegion,
                  "polygon '" + poly.region_id + "' contains no grid-cell centers");
    }
    region.cells.push_back(grid.nearest_cell(vertex_sum / static_cast<double>(vertex_count)));
  }
  return region;
}

std::vector<double> aggregation_weights(const Region& region, AggregationScheme scheme,
                                        const GridSpec& grid) {
  region.validate();
  const std::size_t n = region.cells.size();
  switch (scheme) {
    case AggregationScheme::Average:
      return std::vector<double>(n, 1.0 / static_cast<double>(n));
    case AggregationScheme::Sum:
      return std::vector<double>(n, grid.cell_area());
    case AggregationScheme::WeightedAverage: {
      if (!region.cell_weights) {
        throw Error(ErrorKind::MissingWeights,
                    "region '" + region.region_id + "' needs cell_weights for weighted-average");
      }
      const auto& raw = *region.cell_weights;
      const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = raw[i] / total;
      return w;
    }
  }
  return {};
}

PartitionDiagnostics validate_partition(const Partition& partition, const GridSpec& grid) {
  PartitionDiagnostics diag;
  std::unordered_map<CellIndex, std::size_t> owner;
  for (std::size_t r = 0; r < partition.regions.size(); ++r) {
    const Region& region = partition.regions[r];
    if (region.cells.empty()) {
      diag.empty_regions.push_back(region.region_id);
      diag.warnings.push_back("region '" + region.region_id + "' is empty");
      continue;
    }
    for (CellIndex c : region.cells) {
      if (!grid.contains(c)) {
        throw Error(ErrorKind::GridMismatch, "region '" + region.region_id + "' references cell " +
                                                 std::to_string(c) + " outside the grid");
      }
      auto [it, inserted] = owner.emplace(c, r);
      if (!inserted) {
        const std::string& other = partition.regions[it->second].region_id;
        throw Error(ErrorKind::OverlappingRegions,
                    "(" + other + ", " + region.region_id + ") share cell " + std::to_string(c));
      }
    }
  }
  diag.coverage = static_cast<double>(owner.size()) / static_cast<double>(grid.size());
  if (owner.size() < static_cast<std::size_t>(grid.size())) {
    diag.warnings.push_back("partition '" + partition.partition_id +
                            "' covers a fraction " + std::to_string(diag.coverage) + " of the grid");
  }
  return diag;
}

Eigen::Vector2d centroid(const Region& region, const GridSpec& grid) {
  if (region.cells.empty()) {
    throw Error(ErrorKind::EmptyRegion, "region '" + region.region_id + "' has no cells");
  }
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (CellIndex c : region.cells) sum += grid.center(c);
  return sum / static_cast<double>(region.cells.size());
}

}  // namespace sagp

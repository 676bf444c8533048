#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sagp {

using CellIndex = std::int32_t;

/// Regular grid of square cells. Grid point i sits at the center of cell
/// (col, row) = (i % nx, i / nx).
struct GridSpec {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double cell_size = 1.0;
  int nx = 1;
  int ny = 1;

  void validate() const;

  std::int64_t size() const { return static_cast<std::int64_t>(nx) * ny; }
  int col(CellIndex i) const { return i % nx; }
  int row(CellIndex i) const { return i / nx; }
  CellIndex index(int col, int row) const { return row * nx + col; }
  bool contains(std::int64_t i) const { return i >= 0 && i < size(); }
  Eigen::Vector2d center(CellIndex i) const;
  double cell_area() const { return cell_size * cell_size; }

  /// Cell whose center is closest to p, clamped to the grid.
  CellIndex nearest_cell(const Eigen::Vector2d& p) const;

  bool operator==(const GridSpec&) const = default;
};

struct Region {
  std::string region_id;
  std::vector<CellIndex> cells;
  std::optional<std::vector<double>> cell_weights;

  void validate() const;
};

struct Partition {
  std::string partition_id;
  std::vector<Region> regions;

  std::size_t size() const { return regions.size(); }
};

enum class AggregationScheme { Average, Sum, WeightedAverage };

AggregationScheme parse_scheme(std::string_view text);
const char* to_string(AggregationScheme scheme);

struct PolygonGeometry {
  std::string region_id;
  std::vector<std::vector<Eigen::Vector2d>> rings;

  /// Closes every ring (last vertex == first) and checks the vertex count.
  void normalize();
};

struct RasterizeOptions {
  /// On an empty rasterization, claim the cell nearest to the vertex mean
  /// instead of raising EmptyRegion.
  bool snap_to_nearest = false;
};

/// Cells whose centers fall inside the polygon under the even-odd rule.
/// A crossing is counted for an edge (a, b) when (a.y > py) != (b.y > py)
/// and px is strictly left of the intersection, so points on left/lower
/// edges are inside and points on right/upper edges are outside.
Region rasterize(const PolygonGeometry& poly, const GridSpec& grid,
                 const RasterizeOptions& options = {});

/// Discrete aggregation weights aligned with region.cells.
std::vector<double> aggregation_weights(const Region& region, AggregationScheme scheme,
                                        const GridSpec& grid);

struct PartitionDiagnostics {
  double coverage = 0.0;
  std::vector<std::string> empty_regions;
  std::vector<std::string> warnings;
};

/// Throws OverlappingRegions naming the first offending pair.
PartitionDiagnostics validate_partition(const Partition& partition, const GridSpec& grid);

/// Arithmetic mean of the member cell centers.
Eigen::Vector2d centroid(const Region& region, const GridSpec& grid);

}  // namespace sagp

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sagp/aggregation.hpp"
#include "sagp/data.hpp"
#include "sagp/evaluation.hpp"
#include "sagp/geometry.hpp"
#include "sagp/kernel.hpp"
#include "sagp/model.hpp"

namespace sagp {

namespace fs = std::filesystem;

/// Comma-separated file with a header row. Fields are trimmed; blank lines
/// and lines starting with '#' are skipped.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // 1-based source line of each row

  /// Column position, -1 when absent.
  int column(std::string_view name) const;
  /// "path:line" for error messages.
  std::string where(std::size_t row) const;
};

/// Throws ParseError when the file cannot be read, a required column is
/// missing or a row has the wrong number of fields.
CsvTable read_csv(const fs::path& path, const std::vector<std::string>& required);

double parse_double(std::string_view text, const std::string& where);
long long parse_integer(std::string_view text, const std::string& where);

/// Partitions keyed by dataset id, in order of first appearance.
using NamedPartitions = std::vector<std::pair<std::string, Partition>>;

/// `dataset_id,region_id,cell_id[,weight]`. Cells outside the grid raise
/// GridMismatch.
NamedPartitions read_membership_csv(const fs::path& path, const GridSpec& grid);
void write_membership_csv(const fs::path& path, const NamedPartitions& partitions);

/// `region_id,ring_index,vertex_index,x,y`.
std::vector<PolygonGeometry> read_polygon_csv(const fs::path& path);
Partition rasterize_partition(const std::vector<PolygonGeometry>& polygons, const GridSpec& grid,
                              const std::string& partition_id, const RasterizeOptions& options = {});

struct ObservationRow {
  std::string domain_id;
  std::string dataset_id;
  std::string region_id;
  double value = 0.0;
};

/// `domain_id,dataset_id,region_id,value`, raw units.
std::vector<ObservationRow> read_observations_csv(const fs::path& path);
void write_observations_csv(const fs::path& path, const std::vector<ObservationRow>& rows);

/// Values for the regions of one partition, in partition order. Throws
/// ParseError naming the first region without exactly one value.
Eigen::VectorXd match_observations(const std::vector<ObservationRow>& rows, const std::string& domain_id,
                                   const std::string& dataset_id, const Partition& partition);

struct DatasetSchemes {
  std::vector<std::pair<std::string, AggregationScheme>> entries;
  AggregationScheme of(const std::string& dataset_id) const;
};

/// Every partition paired with its observations and z-scored.
DomainData assemble_domain(const std::string& domain_id, const GridSpec& grid, const NamedPartitions& partitions,
                           const DatasetSchemes& schemes, const std::vector<ObservationRow>& observations);

struct GridValueRow {
  std::string dataset_id;
  CellIndex cell_id = 0;
  double value = 0.0;
};

/// `dataset_id,cell_id,value`.
void write_ground_truth_csv(const fs::path& path, const std::vector<GridValueRow>& rows);
std::vector<GridValueRow> read_ground_truth_csv(const fs::path& path);

/// `dataset_id,region_id,mean,variance`.
void write_region_predictions_csv(const fs::path& path,
                                  const std::vector<std::pair<std::string, RegionPrediction>>& predictions);

/// `dataset_id,cell_id,mean,variance` for the listed rows of a raster.
void write_grid_predictions_csv(const fs::path& path, const std::vector<std::string>& dataset_ids,
                                const Eigen::MatrixXd& mean, const Eigen::MatrixXd& variance);

/// 8-bit binary PGM, min-max scaled; the top image row is the top grid row.
void write_pgm(const fs::path& path, const GridSpec& grid, const Eigen::VectorXd& values);

struct MetricRow {
  std::string task_id;
  std::string method;
  int L = 0;
  std::uint64_t seed = 0;
  double mape = 0.0;
};

/// `task_id,method,L,seed,mape`.
void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows);
/// `task_id,L,fold_region_id,abs_pct_err`; failed folds are left out.
void write_folds_csv(const fs::path& path, const std::string& task_id, const CVResult& cv);
/// `L,mean_error,folds_ok,folds`.
void write_cv_table_csv(const fs::path& path, const CVResult& cv);

/// Per-restart log-likelihood trace: `restart,iteration,log_likelihood`.
void write_fit_log_csv(const fs::path& path, const FitDiagnostics& diagnostics);

/// mu and C of one domain, row-major, preceded by a block index map.
void write_moments_csv(const fs::path& path, const MarginalMoments& moments, const DatasetCatalog& catalog,
                       const DomainData& domain);

std::uint64_t fnv1a(std::string_view text);
std::string hex64(std::uint64_t value);

struct ManifestDomain {
  std::string domain_id;
  GridSpec grid;
  std::vector<std::pair<std::string, NormalizationStats>> stats;
};

struct ModelManifest {
  int L = 0;
  std::vector<std::string> dataset_ids;
  std::vector<ManifestDomain> domains;
  std::string config_hash;
  double jitter = 0.0;
  double log_likelihood = 0.0;

  const ManifestDomain& domain(const std::string& domain_id) const;
};

ModelManifest make_manifest(const FittedModel& model, const std::string& config_hash, double jitter);
void write_manifest(const fs::path& path, const ModelManifest& manifest);
ModelManifest read_manifest(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace sagp

#include "sagp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sagp/error.hpp"

namespace sagp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  return out;
}

void check_cell(long long cell, const GridSpec& grid, const std::string& where) {
  if (!grid.contains(cell)) {
    throw Error(ErrorKind::GridMismatch, where + ": cell " + std::to_string(cell) + " outside the " +
                                             std::to_string(grid.nx) + "x" + std::to_string(grid.ny) + " grid");
  }
}

}  // namespace

int CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

std::string CsvTable::where(std::size_t row) const { return path + ":" + std::to_string(lines[row]); }

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  CsvTable table;
  table.path = path.string();
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split(t);
    if (table.header.empty()) {
      table.header = std::move(fields);
      for (const auto& name : required) {
        if (table.column(name) < 0) {
          throw Error(ErrorKind::ParseError, table.path + ":" + std::to_string(number) + ": missing column '" +
                                                 name + "'");
        }
      }
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::ParseError, table.path + ":" + std::to_string(number) + ": expected " +
                                             std::to_string(table.header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(number);
  }
  if (table.header.empty()) throw Error(ErrorKind::ParseError, table.path + ": no header row");
  return table;
}

double parse_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw Error(ErrorKind::ParseError, where + ": not a finite number: '" + std::string(text) + "'");
  }
  return v;
}

long long parse_integer(std::string_view text, const std::string& where) {
  long long v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::ParseError, where + ": not an integer: '" + std::string(text) + "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

NamedPartitions read_membership_csv(const fs::path& path, const GridSpec& grid) {
  const CsvTable t = read_csv(path, {"dataset_id", "region_id", "cell_id"});
  const int c_ds = t.column("dataset_id"), c_reg = t.column("region_id"), c_cell = t.column("cell_id");
  const int c_w = t.column("weight");

  NamedPartitions out;
  std::map<std::string, std::size_t> ds_pos;
  std::vector<std::map<std::string, std::size_t>> reg_pos;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long long cell = parse_integer(row[c_cell], t.where(i));
    check_cell(cell, grid, t.where(i));
    auto [dit, dnew] = ds_pos.try_emplace(row[c_ds], out.size());
    if (dnew) {
      out.emplace_back(row[c_ds], Partition{row[c_ds], {}});
      reg_pos.emplace_back();
    }
    Partition& p = out[dit->second].second;
    auto [rit, rnew] = reg_pos[dit->second].try_emplace(row[c_reg], p.regions.size());
    if (rnew) p.regions.push_back({row[c_reg], {}, std::nullopt});
    Region& r = p.regions[rit->second];
    r.cells.push_back(static_cast<CellIndex>(cell));
    if (c_w >= 0) {
      if (!r.cell_weights) {
        if (r.cells.size() > 1) {
          throw Error(ErrorKind::ParseError, t.where(i) + ": region '" + r.region_id + "' mixes weighted and unweighted rows");
        }
        r.cell_weights.emplace();
      }
      r.cell_weights->push_back(parse_double(row[c_w], t.where(i)));
    }
  }
  for (auto& [id, p] : out) {
    for (auto& r : p.regions) r.validate();
    validate_partition(p, grid);
  }
  return out;
}

void write_membership_csv(const fs::path& path, const NamedPartitions& partitions) {
  bool weighted = false;
  for (const auto& [id, p] : partitions) {
    for (const auto& r : p.regions) weighted = weighted || r.cell_weights.has_value();
  }
  auto out = open_out(path);
  out << "dataset_id,region_id,cell_id" << (weighted ? ",weight" : "") << '\n';
  for (const auto& [id, p] : partitions) {
    for (const auto& r : p.regions) {
      for (std::size_t k = 0; k < r.cells.size(); ++k) {
        out << id << ',' << r.region_id << ',' << r.cells[k];
        if (weighted) out << ',' << (r.cell_weights ? format_number((*r.cell_weights)[k]) : "1");
        out << '\n';
      }
    }
  }
}

std::vector<PolygonGeometry> read_polygon_csv(const fs::path& path) {
  const CsvTable t = read_csv(path, {"region_id", "ring_index", "vertex_index", "x", "y"});
  const int c_reg = t.column("region_id"), c_ring = t.column("ring_index"), c_v = t.column("vertex_index");
  const int c_x = t.column("x"), c_y = t.column("y");

  std::vector<PolygonGeometry> out;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    auto [it, fresh] = pos.try_emplace(row[c_reg], out.size());
    if (fresh) out.push_back({row[c_reg], {}});
    PolygonGeometry& poly = out[it->second];
    const long long ring = parse_integer(row[c_ring], t.where(i));
    const long long vertex = parse_integer(row[c_v], t.where(i));
    if (ring < 0 || ring > static_cast<long long>(poly.rings.size())) {
      throw Error(ErrorKind::ParseError, t.where(i) + ": ring indices must start at 0 and be contiguous");
    }
    if (ring == static_cast<long long>(poly.rings.size())) poly.rings.emplace_back();
    auto& ring_pts = poly.rings[static_cast<std::size_t>(ring)];
    if (vertex != static_cast<long long>(ring_pts.size())) {
      throw Error(ErrorKind::ParseError, t.where(i) + ": vertices must be listed in ring order");
    }
    ring_pts.emplace_back(parse_double(row[c_x], t.where(i)), parse_double(row[c_y], t.where(i)));
  }
  for (auto& poly : out) poly.normalize();
  return out;
}

Partition rasterize_partition(const std::vector<PolygonGeometry>& polygons, const GridSpec& grid,
                              const std::string& partition_id, const RasterizeOptions& options) {
  Partition p;
  p.partition_id = partition_id;
  for (const auto& poly : polygons) p.regions.push_back(rasterize(poly, grid, options));
  validate_partition(p, grid);
  return p;
}

std::vector<ObservationRow> read_observations_csv(const fs::path& path) {
  const CsvTable t = read_csv(path, {"domain_id", "dataset_id", "region_id", "value"});
  const int c_dom = t.column("domain_id"), c_ds = t.column("dataset_id"), c_reg = t.column("region_id");
  const int c_val = t.column("value");
  std::vector<ObservationRow> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    out.push_back({row[c_dom], row[c_ds], row[c_reg], parse_double(row[c_val], t.where(i))});
  }
  return out;
}

void write_observations_csv(const fs::path& path, const std::vector<ObservationRow>& rows) {
  auto out = open_out(path);
  out << "domain_id,dataset_id,region_id,value\n";
  for (const auto& r : rows) {
    out << r.domain_id << ',' << r.dataset_id << ',' << r.region_id << ',' << format_number(r.value) << '\n';
  }
}

Eigen::VectorXd match_observations(const std::vector<ObservationRow>& rows, const std::string& domain_id,
                                   const std::string& dataset_id, const Partition& partition) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t n = 0; n < partition.size(); ++n) pos.emplace(partition.regions[n].region_id, n);
  Eigen::VectorXd y(static_cast<Eigen::Index>(partition.size()));
  std::vector<int> seen(partition.size(), 0);
  for (const auto& r : rows) {
    if (r.domain_id != domain_id || r.dataset_id != dataset_id) continue;
    const auto it = pos.find(r.region_id);
    if (it == pos.end()) {
      throw Error(ErrorKind::ParseError, "observation for unknown region '" + r.region_id + "' of dataset '" +
                                             dataset_id + "' in domain '" + domain_id + "'");
    }
    y[static_cast<Eigen::Index>(it->second)] = r.value;
    ++seen[it->second];
  }
  for (std::size_t n = 0; n < partition.size(); ++n) {
    if (seen[n] != 1) {
      throw Error(ErrorKind::ParseError, "region '" + partition.regions[n].region_id + "' of dataset '" +
                                             dataset_id + "' in domain '" + domain_id + "' has " +
                                             std::to_string(seen[n]) + " observations, expected 1");
    }
  }
  return y;
}

AggregationScheme DatasetSchemes::of(const std::string& dataset_id) const {
  for (const auto& [id, scheme] : entries) {
    if (id == dataset_id) return scheme;
  }
  return AggregationScheme::Average;
}

DomainData assemble_domain(const std::string& domain_id, const GridSpec& grid, const NamedPartitions& partitions,
                           const DatasetSchemes& schemes, const std::vector<ObservationRow>& observations) {
  DomainData d;
  d.domain_id = domain_id;
  d.grid = grid;
  std::set<std::string> known;
  for (const auto& [id, p] : partitions) {
    known.insert(id);
    const Eigen::VectorXd raw = match_observations(observations, domain_id, id, p);
    d.datasets.push_back(make_dataset(id, p, schemes.of(id), raw));
  }
  for (const auto& r : observations) {
    if (r.domain_id == domain_id && !known.count(r.dataset_id)) {
      throw Error(ErrorKind::UnknownDataset, "observations name dataset '" + r.dataset_id + "' with no regions in domain '" +
                                                 domain_id + "'");
    }
  }
  d.validate();
  return d;
}

void write_ground_truth_csv(const fs::path& path, const std::vector<GridValueRow>& rows) {
  auto out = open_out(path);
  out << "dataset_id,cell_id,value\n";
  for (const auto& r : rows) out << r.dataset_id << ',' << r.cell_id << ',' << format_number(r.value) << '\n';
}

std::vector<GridValueRow> read_ground_truth_csv(const fs::path& path) {
  const CsvTable t = read_csv(path, {"dataset_id", "cell_id", "value"});
  const int c_ds = t.column("dataset_id"), c_cell = t.column("cell_id"), c_val = t.column("value");
  std::vector<GridValueRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    out.push_back({row[c_ds], static_cast<CellIndex>(parse_integer(row[c_cell], t.where(i))),
                   parse_double(row[c_val], t.where(i))});
  }
  return out;
}

void write_region_predictions_csv(const fs::path& path,
                                  const std::vector<std::pair<std::string, RegionPrediction>>& predictions) {
  auto out = open_out(path);
  out << "dataset_id,region_id,mean,variance\n";
  for (const auto& [id, p] : predictions) {
    for (Eigen::Index n = 0; n < p.mean.size(); ++n) {
      out << id << ',' << p.region_ids[static_cast<std::size_t>(n)] << ',' << format_number(p.mean[n]) << ','
          << format_number(std::max(0.0, p.variance[n])) << '\n';
    }
  }
}

void write_grid_predictions_csv(const fs::path& path, const std::vector<std::string>& dataset_ids,
                                const Eigen::MatrixXd& mean, const Eigen::MatrixXd& variance) {
  auto out = open_out(path);
  out << "dataset_id,cell_id,mean,variance\n";
  for (Eigen::Index s = 0; s < mean.rows(); ++s) {
    for (Eigen::Index i = 0; i < mean.cols(); ++i) {
      out << dataset_ids[static_cast<std::size_t>(s)] << ',' << i << ',' << format_number(mean(s, i)) << ','
          << format_number(std::max(0.0, variance(s, i))) << '\n';
    }
  }
}

void write_pgm(const fs::path& path, const GridSpec& grid, const Eigen::VectorXd& values) {
  if (values.size() != grid.size()) {
    throw Error(ErrorKind::GridMismatch, "heatmap needs one value per grid cell");
  }
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  auto out = open_out(path);
  out << "P5\n" << grid.nx << ' ' << grid.ny << "\n255\n";
  std::string row(static_cast<std::size_t>(grid.nx), '\0');
  for (int r = grid.ny - 1; r >= 0; --r) {
    for (int c = 0; c < grid.nx; ++c) {
      const double u = (values[grid.index(c, r)] - lo) / span;
      row[static_cast<std::size_t>(c)] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  auto out = open_out(path);
  out << "task_id,method,L,seed,mape\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.method << ',' << r.L << ',' << r.seed << ',' << format_number(r.mape) << '\n';
  }
}

void write_folds_csv(const fs::path& path, const std::string& task_id, const CVResult& cv) {
  auto out = open_out(path);
  out << "task_id,L,fold_region_id,abs_pct_err\n";
  for (const auto& c : cv.candidates) {
    for (const auto& f : c.folds) {
      if (f.ok) out << task_id << ',' << c.L << ',' << f.region_id << ',' << format_number(f.abs_pct_err) << '\n';
    }
  }
}

void write_cv_table_csv(const fs::path& path, const CVResult& cv) {
  auto out = open_out(path);
  out << "L,mean_error,folds_ok,folds\n";
  for (const auto& c : cv.candidates) {
    out << c.L << ',' << format_number(c.mean_error) << ',' << c.succeeded() << ',' << c.folds.size() << '\n';
  }
}

void write_fit_log_csv(const fs::path& path, const FitDiagnostics& diagnostics) {
  auto out = open_out(path);
  out << "restart,iteration,log_likelihood\n";
  for (const auto& t : diagnostics.traces) {
    for (std::size_t k = 0; k < t.log_likelihood_trace.size(); ++k) {
      out << t.restart << ',' << k << ',' << format_number(t.log_likelihood_trace[k]) << '\n';
    }
  }
}

void write_moments_csv(const fs::path& path, const MarginalMoments& moments, const DatasetCatalog& catalog,
                       const DomainData& domain) {
  auto out = open_out(path);
  out << "# domain " << domain.domain_id << '\n';
  std::size_t row = 0;
  for (int s = 0; s < catalog.size(); ++s) {
    std::size_t count = 0;
    for (const auto& b : moments.index) count += b.dataset == s;
    if (count == 0) continue;
    out << "# block " << catalog.ids()[static_cast<std::size_t>(s)] << " rows " << row << ".." << row + count - 1
        << '\n';
    row += count;
  }
  const Eigen::Index n = moments.C.rows();
  out << "mu";
  for (Eigen::Index j = 0; j < n; ++j) out << ",C" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    out << format_number(moments.mu[i]);
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_number(moments.C(i, j));
    out << '\n';
  }
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = digits[value & 0xF];
  return s;
}

const ManifestDomain& ModelManifest::domain(const std::string& domain_id) const {
  for (const auto& d : domains) {
    if (d.domain_id == domain_id) return d;
  }
  throw Error(ErrorKind::UnknownDomain, "model has no domain '" + domain_id + "'");
}

ModelManifest make_manifest(const FittedModel& model, const std::string& config_hash, double jitter) {
  ModelManifest m;
  m.L = model.params().num_latents();
  m.dataset_ids = model.catalog().ids();
  m.config_hash = config_hash;
  m.jitter = jitter;
  m.log_likelihood = model.diagnostics().log_likelihood;
  for (const auto& state : model.domains()) {
    ManifestDomain d{state.data.domain_id, state.data.grid, {}};
    for (const auto& ds : state.data.datasets) d.stats.emplace_back(ds.dataset_id, ds.stats);
    m.domains.push_back(std::move(d));
  }
  return m;
}

void write_manifest(const fs::path& path, const ModelManifest& m) {
  auto out = open_out(path);
  out << "format = sagp-model 1\n";
  out << "L = " << m.L << '\n';
  out << "datasets =";
  for (const auto& id : m.dataset_ids) out << ' ' << id;
  out << '\n';
  out << "config_hash = " << m.config_hash << '\n';
  out << "jitter = " << format_number(m.jitter) << '\n';
  out << "log_likelihood = " << format_number(m.log_likelihood) << '\n';
  for (const auto& d : m.domains) {
    out << "domain = " << d.domain_id << ' ' << format_number(d.grid.origin.x()) << ' '
        << format_number(d.grid.origin.y()) << ' ' << format_number(d.grid.cell_size) << ' ' << d.grid.nx << ' '
        << d.grid.ny << '\n';
    for (const auto& [id, st] : d.stats) {
      out << "stats = " << d.domain_id << ' ' << id << ' ' << format_number(st.mean) << ' ' << format_number(st.std)
          << '\n';
    }
  }
}

ModelManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  ModelManifest m;
  std::string line;
  int number = 0;
  bool format_seen = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = path.string() + ":" + std::to_string(number);
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::ParseError, where + ": expected 'key = value'");
    const std::string key(trim(t.substr(0, eq)));
    std::istringstream value{std::string(trim(t.substr(eq + 1)))};
    std::vector<std::string> words;
    for (std::string w; value >> w;) words.push_back(w);
    auto need = [&](std::size_t n) {
      if (words.size() != n) throw Error(ErrorKind::ParseError, where + ": malformed '" + key + "' entry");
    };
    if (key == "format") {
      if (words != std::vector<std::string>{"sagp-model", "1"}) {
        throw Error(ErrorKind::ParseError, where + ": unsupported model format");
      }
      format_seen = true;
    } else if (key == "L") {
      need(1);
      m.L = static_cast<int>(parse_integer(words[0], where));
    } else if (key == "datasets") {
      m.dataset_ids = words;
    } else if (key == "config_hash") {
      need(1);
      m.config_hash = words[0];
    } else if (key == "jitter") {
      need(1);
      m.jitter = parse_double(words[0], where);
    } else if (key == "log_likelihood") {
      need(1);
      m.log_likelihood = parse_double(words[0], where);
    } else if (key == "domain") {
      need(6);
      ManifestDomain d;
      d.domain_id = words[0];
      d.grid.origin = {parse_double(words[1], where), parse_double(words[2], where)};
      d.grid.cell_size = parse_double(words[3], where);
      d.grid.nx = static_cast<int>(parse_integer(words[4], where));
      d.grid.ny = static_cast<int>(parse_integer(words[5], where));
      m.domains.push_back(std::move(d));
    } else if (key == "stats") {
      need(4);
      if (m.domains.empty() || m.domains.back().domain_id != words[0]) {
        throw Error(ErrorKind::ParseError, where + ": stats must follow their domain line");
      }
      m.domains.back().stats.emplace_back(words[1],
                                          NormalizationStats{parse_double(words[2], where), parse_double(words[3], where)});
    } else {
      throw Error(ErrorKind::ParseError, where + ": unknown key '" + key + "'");
    }
  }
  if (!format_seen) throw Error(ErrorKind::ParseError, path.string() + ": missing format line");
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sagp

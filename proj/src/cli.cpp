#include "sagp/cli.hpp"

#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sagp/error.hpp"
#include "sagp/evaluation.hpp"
#include "sagp/kernel.hpp"
#include "sagp/synth.hpp"

namespace sagp::cli {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKeys = {
    {"run", {"task", "seed", "out", "model", "dump_moments", "heatmaps"}},
    {"grid", {"nx", "ny", "cell_size", "origin_x", "origin_y"}},
    {"model", {"L", "candidates", "jitter", "restarts", "max_iterations", "gradient_tolerance",
               "function_tolerance", "init"}},
    {"data", {"observations"}},
    {"domain", {"membership", "polygons", "schemes", "snap_to_nearest", "nx", "ny", "cell_size", "origin_x",
                "origin_y"}},
    {"target", {"task_id", "domain", "dataset", "membership", "polygons", "scheme", "truth", "baselines"}},
    {"synth", {"scenario", "L", "share_weights"}},
};

class Section {
 public:
  Section(const pt::ptree* tree, std::string name, std::string source)
      : tree_(tree), name_(std::move(name)), source_(std::move(source)) {}

  bool present() const { return tree_ != nullptr; }

  std::optional<std::string> text(const std::string& key) const {
    if (!tree_) return std::nullopt;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v || v->empty()) return std::nullopt;
    return *v;
  }

  std::string where(const std::string& key) const { return source_ + ": [" + name_ + "] " + key; }

  std::string require(const std::string& key) const {
    auto v = text(key);
    if (!v) throw Error(ErrorKind::ParseError, where(key) + " is required");
    return *v;
  }

  double number(const std::string& key, double fallback) const {
    const auto v = text(key);
    return v ? parse_double(*v, where(key)) : fallback;
  }

  long long integer(const std::string& key, long long fallback) const {
    const auto v = text(key);
    return v ? parse_integer(*v, where(key)) : fallback;
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto v = text(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
    throw Error(ErrorKind::ParseError, where(key) + ": expected true or false, got '" + *v + "'");
  }

  fs::path path(const std::string& key, const fs::path& base) const {
    const auto v = text(key);
    if (!v) return {};
    const fs::path p(*v);
    return p.is_absolute() ? p : base / p;
  }

  /// "a:x, b:y" pairs.
  std::vector<std::pair<std::string, std::string>> pairs(const std::string& key) const {
    std::vector<std::pair<std::string, std::string>> out;
    const auto v = text(key);
    if (!v) return out;
    std::stringstream ss(*v);
    for (std::string item; std::getline(ss, item, ',');) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      item = item.substr(b, e - b + 1);
      const auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
        throw Error(ErrorKind::ParseError, where(key) + ": expected 'dataset:value', got '" + item + "'");
      }
      out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
    }
    return out;
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
  std::string source_;
};

GridSpec read_grid(const Section& s, GridSpec g) {
  g.nx = static_cast<int>(s.integer("nx", g.nx));
  g.ny = static_cast<int>(s.integer("ny", g.ny));
  g.cell_size = s.number("cell_size", g.cell_size);
  g.origin = {s.number("origin_x", g.origin.x()), s.number("origin_y", g.origin.y())};
  return g;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(static_cast<int>(parse_integer(std::string_view(item).substr(b, e - b + 1), where)));
  }
  return out;
}

void echo_config(const RunConfig& config) {
  fs::create_directories(config.out);
  write_text(config.out / "config.ini", config.text);
}

const DomainConfig& domain_config(const RunConfig& config, const std::string& domain_id) {
  for (const auto& d : config.domains) {
    if (d.domain_id == domain_id) return d;
  }
  throw Error(ErrorKind::UnknownDomain, "config declares no domain '" + domain_id + "'");
}

const TargetConfig& require_target(const RunConfig& config) {
  if (!config.target) {
    throw Error(ErrorKind::ParseError, config.task + " needs a [target] section naming the dataset");
  }
  return *config.target;
}

void save_model(const RunConfig& config, const FittedModel& model) {
  write_text(config.out / "hyperparams.txt", format_hyperparams(model.params()));
  write_manifest(config.out / "manifest.txt", make_manifest(model, config.hash(), config.model.jitter));
  write_fit_log_csv(config.out / "fit_log.csv", model.diagnostics());
}

FittedModel load_model(const RunConfig& config, std::vector<DomainData> domains, std::ostream& log) {
  const ModelManifest manifest = read_manifest(config.model_dir / "manifest.txt");
  const HyperParams params = parse_hyperparams(read_text(config.model_dir / "hyperparams.txt"));
  if (params.num_latents() != manifest.L || params.num_datasets() != static_cast<int>(manifest.dataset_ids.size())) {
    throw Error(ErrorKind::ParseError, config.model_dir.string() + ": hyperparameters disagree with the manifest");
  }
  const DatasetCatalog catalog(manifest.dataset_ids);
  for (const auto& d : domains) {
    const ManifestDomain& md = manifest.domain(d.domain_id);
    if (!(md.grid == d.grid)) {
      throw Error(ErrorKind::GridMismatch, "domain '" + d.domain_id + "' grid differs from the saved model's");
    }
    for (const auto& ds : d.datasets) {
      if (catalog.find(ds.dataset_id) < 0) {
        throw Error(ErrorKind::UnknownDataset, "saved model has no dataset '" + ds.dataset_id + "'");
      }
      for (const auto& [id, st] : md.stats) {
        if (id == ds.dataset_id && (st.mean != ds.stats.mean || st.std != ds.stats.std)) {
          log << "warning: normalization of '" << id << "' in domain '" << d.domain_id
              << "' differs from the saved model's\n";
        }
      }
    }
  }
  FitDiagnostics diag;
  diag.log_likelihood = manifest.log_likelihood;
  return condition(params, std::move(domains), manifest.jitter, &catalog, diag);
}

FittedModel obtain_model(const RunConfig& config, const std::vector<DomainData>& domains, std::ostream& log) {
  if (!config.model_dir.empty()) {
    log << "model: loaded from " << config.model_dir.string() << '\n';
    return load_model(config, domains, log);
  }
  FittedModel model = fit(domains, config.model);
  for (const auto& w : model.diagnostics().warnings) log << "warning: " << w << '\n';
  log << "model: fitted, L = " << config.model.L << ", log_likelihood = " << format_number(model.diagnostics().log_likelihood)
      << '\n';
  save_model(config, model);
  return model;
}

Partition read_fine_partition(const TargetConfig& target, const GridSpec& grid, bool snap) {
  if (!target.membership.empty()) {
    for (auto& [id, p] : read_membership_csv(target.membership, grid)) {
      if (id == target.dataset_id) return p;
    }
    throw Error(ErrorKind::ParseError, target.membership.string() + ": no rows for dataset '" + target.dataset_id + "'");
  }
  if (!target.polygons.empty()) {
    RasterizeOptions options;
    options.snap_to_nearest = snap;
    return rasterize_partition(read_polygon_csv(target.polygons), grid, target.dataset_id + "_fine", options);
  }
  throw Error(ErrorKind::ParseError, "[target] needs a membership or polygons file");
}

/// Raster rows of the domain's own datasets, in raw units.
struct RawRaster {
  std::vector<std::string> ids;
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
};

RawRaster raw_raster(const FittedModel& model, const DomainData& domain) {
  const GridPrediction g = PosteriorGP(model, domain.domain_id).raster();
  RawRaster r;
  r.mean.resize(static_cast<Eigen::Index>(domain.datasets.size()), g.mean.cols());
  r.variance.resizeLike(r.mean);
  for (std::size_t k = 0; k < domain.datasets.size(); ++k) {
    const auto& ds = domain.datasets[k];
    const int s = model.catalog().index_of(ds.dataset_id);
    const auto row = static_cast<Eigen::Index>(k);
    r.ids.push_back(ds.dataset_id);
    r.mean.row(row) = (g.mean.row(s).array() * ds.stats.std + ds.stats.mean).matrix();
    r.variance.row(row) = (g.variance.row(s).array().max(0.0) * ds.stats.std * ds.stats.std).matrix();
  }
  return r;
}

void write_raster(const RunConfig& config, const RawRaster& r, const GridSpec& grid, const std::string& suffix) {
  write_grid_predictions_csv(config.out / ("predictions_grid" + suffix + ".csv"), r.ids, r.mean, r.variance);
  if (!config.heatmaps) return;
  for (std::size_t k = 0; k < r.ids.size(); ++k) {
    write_pgm(config.out / ("heatmap" + suffix + "_" + r.ids[k] + ".pgm"), grid,
              r.mean.row(static_cast<Eigen::Index>(k)).transpose());
  }
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::GridMismatch:
      return kGridMismatch;
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::OptimizerDiverged:
    case ErrorKind::CVFailed:
      return kOptimizerFailure;
    default:
      return kInputError;
  }
}

std::string RunConfig::hash() const {
  std::ostringstream s;
  s << text << "\n#task=" << task << "#seed=" << seed << "#jitter=" << format_number(model.jitter);
  return hex64(fnv1a(s.str()));
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, const fs::path& source) {
  const std::string src = source.empty() ? std::string("config") : source.string();
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::ParseError, src + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  for (const auto& [name, sub] : tree) {
    const std::string kind = name.substr(0, name.find(':'));
    const auto allowed = kKeys.find(kind);
    if (allowed == kKeys.end() || (kind == "domain") != (name.find(':') != std::string::npos)) {
      throw Error(ErrorKind::ParseError, src + ": unknown section [" + name + "]");
    }
    if (!sub.data().empty()) throw Error(ErrorKind::ParseError, src + ": key '" + name + "' outside a section");
    for (const auto& [key, value] : sub) {
      if (!allowed->second.count(key)) {
        throw Error(ErrorKind::ParseError, src + ": [" + name + "] unknown key '" + key + "'");
      }
    }
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name, src);
  };

  RunConfig c;
  c.source = source;
  c.text = text;
  const Section run = section("run");
  c.task = run.text("task").value_or("fit");
  const long long seed = run.integer("seed", 0);
  if (seed < 0) throw Error(ErrorKind::ParseError, run.where("seed") + " must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.out = run.text("out") ? run.path("out", base_dir) : base_dir / "out";
  c.model_dir = run.path("model", base_dir);
  c.dump_moments = run.flag("dump_moments", false);
  c.heatmaps = run.flag("heatmaps", false);

  const Section m = section("model");
  c.model.L = static_cast<int>(m.integer("L", 1));
  c.model.jitter = m.number("jitter", c.model.jitter);
  c.model.optimizer.restarts = static_cast<int>(m.integer("restarts", c.model.optimizer.restarts));
  c.model.optimizer.max_iterations = static_cast<int>(m.integer("max_iterations", c.model.optimizer.max_iterations));
  c.model.optimizer.gradient_tolerance = m.number("gradient_tolerance", c.model.optimizer.gradient_tolerance);
  c.model.optimizer.function_tolerance = m.number("function_tolerance", c.model.optimizer.function_tolerance);
  c.model.optimizer.seed = c.seed;
  c.model.init = m.text("init").value_or("default");
  if (auto cand = m.text("candidates")) c.candidates = parse_int_list(*cand, m.where("candidates"));

  c.observations = section("data").path("observations", base_dir);

  const GridSpec base_grid = read_grid(section("grid"), GridSpec{});
  for (const auto& [name, sub] : tree) {
    if (name.rfind("domain:", 0) != 0) continue;
    const Section s(&sub, name, src);
    DomainConfig d;
    d.domain_id = name.substr(7);
    if (d.domain_id.empty()) throw Error(ErrorKind::ParseError, src + ": empty domain name");
    d.grid = read_grid(s, base_grid);
    d.membership = s.path("membership", base_dir);
    for (auto& [id, p] : s.pairs("polygons")) {
      const fs::path path(p);
      d.polygons.emplace_back(id, path.is_absolute() ? path : base_dir / path);
    }
    for (auto& [id, scheme] : s.pairs("schemes")) {
      try {
        d.schemes.entries.emplace_back(id, parse_scheme(scheme));
      } catch (const Error& e) {
        throw Error(ErrorKind::ParseError, s.where("schemes") + ": " + e.what());
      }
    }
    d.snap_to_nearest = s.flag("snap_to_nearest", false);
    c.domains.push_back(std::move(d));
  }

  const Section t = section("target");
  if (t.present()) {
    TargetConfig target;
    target.task_id = t.text("task_id").value_or("refine");
    target.dataset_id = t.require("dataset");
    if (auto dom = t.text("domain")) {
      target.domain_id = *dom;
    } else if (c.domains.size() == 1) {
      target.domain_id = c.domains.front().domain_id;
    } else {
      throw Error(ErrorKind::ParseError, t.where("domain") + " is required with several domains");
    }
    target.membership = t.path("membership", base_dir);
    target.polygons = t.path("polygons", base_dir);
    if (auto scheme = t.text("scheme")) {
      try {
        target.scheme = parse_scheme(*scheme);
      } catch (const Error& e) {
        throw Error(ErrorKind::ParseError, t.where("scheme") + ": " + e.what());
      }
    }
    target.truth = t.path("truth", base_dir);
    target.baselines = t.flag("baselines", false);
    c.target = std::move(target);
  }

  const Section sy = section("synth");
  c.synth.scenario = sy.text("scenario").value_or("refinement");
  c.synth.L = static_cast<int>(sy.integer("L", 2));
  c.synth.share_weights = sy.flag("share_weights", false);

  static const std::set<std::string> tasks = {"fit", "refine", "cv", "synth", "predict"};
  if (!tasks.count(c.task)) throw Error(ErrorKind::ParseError, run.where("task") + ": unknown task '" + c.task + "'");
  if (c.task != "synth") {
    if (c.domains.empty()) throw Error(ErrorKind::ParseError, src + ": no [domain:<id>] section");
    if (c.observations.empty()) throw Error(ErrorKind::ParseError, src + ": [data] observations is required");
  }
  if (c.task == "predict" && c.model_dir.empty()) {
    throw Error(ErrorKind::ParseError, run.where("model") + " is required for predict");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_text(path);
  return parse_run_config(text, path.has_parent_path() ? path.parent_path() : fs::path("."), path);
}

void apply(RunConfig& config, const Overrides& o) {
  if (o.task) config.task = *o.task;
  if (o.seed) {
    config.seed = *o.seed;
    config.model.optimizer.seed = *o.seed;
  }
  if (o.out) config.out = *o.out;
  if (o.jitter) config.model.jitter = *o.jitter;
  if (o.dump_moments) config.dump_moments = true;
}

std::vector<DomainData> load_domains(const RunConfig& config) {
  const std::vector<ObservationRow> observations = read_observations_csv(config.observations);
  std::vector<DomainData> out;
  for (const auto& d : config.domains) {
    d.grid.validate();
    NamedPartitions partitions;
    if (!d.membership.empty()) partitions = read_membership_csv(d.membership, d.grid);
    RasterizeOptions options;
    options.snap_to_nearest = d.snap_to_nearest;
    for (const auto& [id, path] : d.polygons) {
      for (const auto& [existing, p] : partitions) {
        if (existing == id) {
          throw Error(ErrorKind::ParseError, "dataset '" + id + "' of domain '" + d.domain_id +
                                                 "' has both membership rows and polygons");
        }
      }
      partitions.emplace_back(id, rasterize_partition(read_polygon_csv(path), d.grid, id, options));
    }
    if (partitions.empty()) {
      throw Error(ErrorKind::ParseError, "domain '" + d.domain_id + "' declares no membership or polygon files");
    }
    out.push_back(assemble_domain(d.domain_id, d.grid, partitions, d.schemes, observations));
  }
  std::set<std::string> domain_ids;
  for (const auto& r : observations) domain_ids.insert(r.domain_id);
  for (const auto& id : domain_ids) domain_config(config, id);
  return out;
}

int cmd_fit(const RunConfig& config, std::ostream& log) {
  const std::vector<DomainData> domains = load_domains(config);
  echo_config(config);
  const FittedModel model = fit(domains, config.model);
  save_model(config, model);
  if (config.dump_moments) {
    for (const auto& state : model.domains()) {
      const MarginalMoments mm = assemble_moments(state.geometry, model.cache(state.data.domain_id), model.params());
      write_moments_csv(config.out / ("moments_" + state.data.domain_id + ".csv"), mm, model.catalog(), state.data);
    }
  }
  const FitDiagnostics& d = model.diagnostics();
  for (const auto& w : d.warnings) log << "warning: " << w << '\n';
  for (const auto& t : d.traces) {
    log << "restart " << t.restart << ": " << (t.ok ? "ok" : "failed") << ", iterations " << t.iterations;
    if (t.ok) log << ", log_likelihood " << format_number(t.final_log_likelihood);
    if (!t.message.empty()) log << " (" << t.message << ")";
    log << '\n';
  }
  log << "fit: L = " << model.params().num_latents() << ", log_likelihood = " << format_number(d.log_likelihood)
      << ", best restart " << d.best_restart << '\n';
  log << "wrote " << (config.out / "hyperparams.txt").string() << '\n';
  return kOk;
}

int cmd_refine(const RunConfig& config, std::ostream& log) {
  const TargetConfig& target = require_target(config);
  const std::vector<DomainData> domains = load_domains(config);
  const DomainData& domain = find_domain(domains, target.domain_id);
  domain.dataset(target.dataset_id);
  const Partition fine =
      read_fine_partition(target, domain.grid, domain_config(config, target.domain_id).snap_to_nearest);
  Eigen::VectorXd truth;
  if (!target.truth.empty()) {
    truth = match_observations(read_observations_csv(target.truth), target.domain_id, target.dataset_id, fine);
  }
  const RefinementTask task(target.task_id, target.domain_id, target.dataset_id, fine, target.scheme, truth);

  echo_config(config);
  const FittedModel model = obtain_model(config, domains, log);
  const RegionPrediction sagp = refine_sagp(model, task);
  for (const auto& w : sagp.warnings) log << "warning: " << w << '\n';
  write_region_predictions_csv(config.out / "predictions_regions.csv", {{target.dataset_id, sagp}});
  write_raster(config, raw_raster(model, model.domain(target.domain_id).data), domain.grid, "");

  if (!task.has_truth()) {
    log << "no truth supplied; metrics skipped\n";
    return kOk;
  }
  std::vector<MetricRow> rows;
  const int L = model.params().num_latents();
  rows.push_back({task.task_id(), "sagp", L, config.seed, score(task, sagp.mean)});
  if (target.baselines) {
    rows.push_back({task.task_id(), "gpr", 0, config.seed, score(task, baseline_gpr(task, domain, config.model.optimizer).mean)});
    ModelConfig slfm_config = config.model;
    slfm_config.L = L;
    rows.push_back({task.task_id(), "slfm", L, config.seed, score(task, baseline_slfm(task, domains, slfm_config).mean)});
  }
  write_metrics_csv(config.out / "metrics.csv", rows);
  for (const auto& r : rows) log << "mape " << r.method << " = " << format_number(r.mape) << '\n';
  return kOk;
}

int cmd_cv(const RunConfig& config, std::ostream& log) {
  const TargetConfig& target = require_target(config);
  const std::vector<DomainData> domains = load_domains(config);
  const DomainData& domain = find_domain(domains, target.domain_id);
  domain.dataset(target.dataset_id);
  std::vector<int> candidates = config.candidates;
  if (candidates.empty()) {
    const int S = DatasetCatalog::from_domains(domains).size();
    for (int L = 1; L <= S; ++L) candidates.push_back(L);
  }
  const RefinementTask task(target.task_id, target.domain_id, target.dataset_id, Partition{}, target.scheme, {});
  echo_config(config);
  const CVResult cv = loocv_select_L(domains, task, candidates, config.model);
  for (const auto& w : cv.warnings) log << "warning: " << w << '\n';
  write_cv_table_csv(config.out / "cv.csv", cv);
  write_folds_csv(config.out / "cv_folds.csv", task.task_id(), cv);
  log << "L  mean_error  folds\n";
  for (const auto& c : cv.candidates) {
    log << c.L << "  " << format_number(c.mean_error) << "  " << c.succeeded() << "/" << c.folds.size() << '\n';
  }
  log << "selected_L = " << cv.selected_L << '\n';
  write_text(config.out / "cv_selected.txt", "selected_L = " + std::to_string(cv.selected_L) + "\n");
  return kOk;
}

int cmd_synth(const RunConfig& config, std::ostream& log) {
  SynthSpec spec;
  if (config.synth.scenario == "refinement") {
    spec = refinement_scenario(config.seed, config.synth.L);
  } else if (config.synth.scenario == "transfer") {
    spec = transfer_spec(config.seed, config.synth.share_weights, config.synth.L);
  } else {
    throw Error(ErrorKind::ParseError, "unknown synth scenario '" + config.synth.scenario + "'");
  }
  const std::vector<SynthDomain> domains = sample_ground_truth(spec);
  echo_config(config);

  std::vector<ObservationRow> obs, fine_truth;
  const SynthDomain* target_domain = nullptr;
  const SynthDataset* target = nullptr;
  for (const auto& d : domains) {
    NamedPartitions partitions;
    std::vector<GridValueRow> field;
    for (std::size_t k = 0; k < d.datasets.size(); ++k) {
      const SynthDataset& ds = d.datasets[k];
      partitions.emplace_back(ds.dataset_id, ds.partition);
      for (std::size_t n = 0; n < ds.partition.size(); ++n) {
        obs.push_back({d.domain_id, ds.dataset_id, ds.partition.regions[n].region_id,
                       ds.observed_raw[static_cast<Eigen::Index>(n)]});
      }
      for (Eigen::Index i = 0; i < d.field_raw.cols(); ++i) {
        field.push_back({ds.dataset_id, static_cast<CellIndex>(i), d.field_raw(static_cast<Eigen::Index>(k), i)});
      }
      if (ds.fine && (!target || d.datasets.size() < target_domain->datasets.size())) {
        target_domain = &d;
        target = &ds;
      }
    }
    write_membership_csv(config.out / ("membership_" + d.domain_id + ".csv"), partitions);
    write_ground_truth_csv(config.out / ("ground_truth_" + d.domain_id + ".csv"), field);
  }
  write_observations_csv(config.out / "observations.csv", obs);
  write_text(config.out / "true_hyperparams.txt", format_hyperparams(spec.params));
  if (!target) throw Error(ErrorKind::InvalidArgument, "synthetic scenario has no refinement target");
  write_membership_csv(config.out / "fine_membership.csv", {{target->dataset_id, *target->fine}});
  for (std::size_t n = 0; n < target->fine->size(); ++n) {
    fine_truth.push_back({target_domain->domain_id, target->dataset_id, target->fine->regions[n].region_id,
                          target->fine_truth_raw[static_cast<Eigen::Index>(n)]});
  }
  write_observations_csv(config.out / "fine_truth.csv", fine_truth);

  const GridSpec& g = domains.front().grid;
  std::ostringstream ini;
  ini << "; generated by sagp synth, scenario " << config.synth.scenario << ", seed " << config.seed << "\n\n"
      << "[run]\ntask = refine\nseed = " << config.seed << "\nout = results\nheatmaps = true\n\n"
      << "[grid]\nnx = " << g.nx << "\nny = " << g.ny << "\ncell_size = " << format_number(g.cell_size)
      << "\norigin_x = " << format_number(g.origin.x()) << "\norigin_y = " << format_number(g.origin.y()) << "\n\n"
      << "[model]\nL = " << config.synth.L << "\ncandidates = 1,2,3\nrestarts = 3\n\n"
      << "[data]\nobservations = observations.csv\n";
  for (const auto& d : domains) ini << "\n[domain:" << d.domain_id << "]\nmembership = membership_" << d.domain_id << ".csv\n";
  ini << "\n[target]\ntask_id = synth_" << config.synth.scenario << "\ndomain = " << target_domain->domain_id
      << "\ndataset = " << target->dataset_id << "\nmembership = fine_membership.csv\ntruth = fine_truth.csv\n"
      << "baselines = true\n";
  write_text(config.out / "run.ini", ini.str());
  log << "synth: " << domains.size() << " domain(s), " << obs.size() << " observations, target '" << target->dataset_id
      << "' in '" << target_domain->domain_id << "'\n";
  log << "wrote " << (config.out / "run.ini").string() << '\n';
  return kOk;
}

int cmd_predict(const RunConfig& config, std::ostream& log) {
  const std::vector<DomainData> domains = load_domains(config);
  echo_config(config);
  const FittedModel model = load_model(config, domains, log);
  for (const auto& state : model.domains()) {
    const DomainData& d = state.data;
    std::vector<std::pair<std::string, RegionPrediction>> regions;
    for (const auto& ds : d.datasets) {
      const RegionPrediction z = predict_region(model, d.domain_id, {ds.dataset_id, ds.partition, ds.scheme});
      regions.emplace_back(ds.dataset_id, to_raw_units(z, ds.stats));
    }
    const std::string suffix = "_" + d.domain_id;
    write_region_predictions_csv(config.out / ("predictions_regions" + suffix + ".csv"), regions);
    write_raster(config, raw_raster(model, d), d.grid, suffix);
    log << "predict: domain '" << d.domain_id << "', " << d.datasets.size() << " dataset(s)\n";
  }
  return kOk;
}

int run(const RunConfig& config, std::ostream& log, std::ostream& err) {
  try {
    if (config.task == "fit") return cmd_fit(config, log);
    if (config.task == "refine") return cmd_refine(config, log);
    if (config.task == "cv") return cmd_cv(config, log);
    if (config.task == "synth") return cmd_synth(config, log);
    if (config.task == "predict") return cmd_predict(config, log);
    err << "error: unknown task '" << config.task << "'\n";
    return kInputError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

int run_file(const fs::path& config_path, const Overrides& overrides, std::ostream& log, std::ostream& err) {
  RunConfig config;
  try {
    config = load_run_config(config_path);
    apply(config, overrides);
    static const std::set<std::string> tasks = {"fit", "refine", "cv", "synth", "predict"};
    if (!tasks.count(config.task)) throw Error(ErrorKind::ParseError, "unknown task '" + config.task + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return run(config, log, err);
}

}  // namespace sagp::cli

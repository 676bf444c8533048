#include "sagp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>

#include "sagp/error.hpp"

namespace sagp {

namespace {

// Boundaries of k equal-ish pieces of n.
int cut(int k, int n, int pieces) { return static_cast<int>((static_cast<std::int64_t>(k) * n) / pieces); }

Region block_region(const GridSpec& grid, const std::string& id, int c0, int c1, int r0, int r1) {
  Region r{id, {}, std::nullopt};
  for (int row = r0; row < r1; ++row) {
    for (int col = c0; col < c1; ++col) r.cells.push_back(grid.index(col, row));
  }
  return r;
}

Eigen::MatrixXd symmetric_root(const Eigen::MatrixXd& K) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

Eigen::MatrixXd axis_kernel(int n, double cell, double beta) {
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = (i - j) * cell;
      K(i, j) = std::exp(-d * d / (2.0 * beta * beta));
    }
  }
  return K;
}

Eigen::VectorXd aggregate(const Partition& partition, AggregationScheme scheme, const GridSpec& grid,
                          const Eigen::VectorXd& field) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(partition.size()));
  for (std::size_t n = 0; n < partition.size(); ++n) {
    const Region& region = partition.regions[n];
    const auto w = aggregation_weights(region, scheme, grid);
    double v = 0.0;
    for (std::size_t j = 0; j < region.cells.size(); ++j) v += w[j] * field[region.cells[j]];
    out[static_cast<Eigen::Index>(n)] = v;
  }
  return out;
}

}  // namespace

const char* to_string(PartitionRecipe::Kind kind) {
  switch (kind) {
    case PartitionRecipe::Kind::Blocks: return "blocks";
    case PartitionRecipe::Kind::Voronoi: return "voronoi";
    case PartitionRecipe::Kind::Strips: return "strips";
    case PartitionRecipe::Kind::Cells: return "cells";
  }
  return "blocks";
}

PartitionRecipe::Kind parse_recipe_kind(const std::string& text) {
  if (text == "blocks") return PartitionRecipe::Kind::Blocks;
  if (text == "voronoi") return PartitionRecipe::Kind::Voronoi;
  if (text == "strips") return PartitionRecipe::Kind::Strips;
  if (text == "cells") return PartitionRecipe::Kind::Cells;
  throw Error(ErrorKind::ParseError, "unknown partition recipe '" + text + "'");
}

Partition make_partition(const PartitionRecipe& recipe, const GridSpec& grid, const std::string& prefix,
                         Rng& rng) {
  grid.validate();
  Partition p{prefix, {}};
  switch (recipe.kind) {
    case PartitionRecipe::Kind::Blocks: {
      if (recipe.bx < 1 || recipe.by < 1 || recipe.bx > grid.nx || recipe.by > grid.ny) {
        throw Error(ErrorKind::InvalidArgument, "block counts must lie in [1, grid size]");
      }
      for (int j = 0; j < recipe.by; ++j) {
        for (int i = 0; i < recipe.bx; ++i) {
          p.regions.push_back(block_region(grid, prefix + "_" + std::to_string(j * recipe.bx + i),
                                           cut(i, grid.nx, recipe.bx), cut(i + 1, grid.nx, recipe.bx),
                                           cut(j, grid.ny, recipe.by), cut(j + 1, grid.ny, recipe.by)));
        }
      }
      break;
    }
    case PartitionRecipe::Kind::Strips: {
      const int across = recipe.vertical ? grid.nx : grid.ny;
      const int along = recipe.vertical ? grid.ny : grid.nx;
      if (recipe.count < 1 || recipe.count > across || recipe.pieces < 1 || recipe.pieces > along) {
        throw Error(ErrorKind::InvalidArgument, "strip counts must lie in [1, grid size]");
      }
      for (int m = 0; m < recipe.pieces; ++m) {
        const int u0 = cut(m, along, recipe.pieces);
        const int u1 = cut(m + 1, along, recipe.pieces);
        for (int k = 0; k < recipe.count; ++k) {
          const int a = cut(k, across, recipe.count);
          const int b = cut(k + 1, across, recipe.count);
          const std::string id = prefix + "_" + std::to_string(m * recipe.count + k);
          p.regions.push_back(recipe.vertical ? block_region(grid, id, a, b, u0, u1)
                                              : block_region(grid, id, u0, u1, a, b));
        }
      }
      break;
    }
    case PartitionRecipe::Kind::Voronoi: {
      if (recipe.count < 1 || recipe.count > grid.size()) {
        throw Error(ErrorKind::InvalidArgument, "Voronoi site count must lie in [1, |G|]");
      }
      std::vector<CellIndex> sites;
      std::set<CellIndex> taken;
      while (static_cast<int>(sites.size()) < recipe.count) {
        const auto c = static_cast<CellIndex>(rng.below(static_cast<std::uint64_t>(grid.size())));
        if (taken.insert(c).second) sites.push_back(c);
      }
      p.regions.resize(sites.size());
      for (std::size_t k = 0; k < sites.size(); ++k) p.regions[k].region_id = prefix + "_" + std::to_string(k);
      for (CellIndex c = 0; c < grid.size(); ++c) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < sites.size(); ++k) {
          const double d = (grid.center(c) - grid.center(sites[k])).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
        p.regions[best].cells.push_back(c);
      }
      break;
    }
    case PartitionRecipe::Kind::Cells: {
      for (CellIndex c = 0; c < grid.size(); ++c) p.regions.push_back({prefix + "_" + std::to_string(c), {c}, std::nullopt});
      break;
    }
  }
  return p;
}

double aspect_ratio(const Region& region, const GridSpec& grid) {
  int c0 = grid.nx, c1 = -1, r0 = grid.ny, r1 = -1;
  for (CellIndex c : region.cells) {
    c0 = std::min(c0, grid.col(c));
    c1 = std::max(c1, grid.col(c));
    r0 = std::min(r0, grid.row(c));
    r1 = std::max(r1, grid.row(c));
  }
  const double w = c1 - c0 + 1;
  const double h = r1 - r0 + 1;
  return std::max(w, h) / std::min(w, h);
}

void SynthSpec::validate() const {
  params.validate();
  const DatasetCatalog catalog(dataset_ids);
  if (catalog.size() != params.num_datasets()) {
    throw Error(ErrorKind::InvalidArgument, "generating parameters need one row per dataset id");
  }
  if (!(scale != 0.0) || !std::isfinite(scale) || !std::isfinite(offset)) {
    throw Error(ErrorKind::InvalidArgument, "raw scale must be nonzero and finite");
  }
  std::set<std::string> domain_ids;
  for (const auto& d : domains) {
    if (!domain_ids.insert(d.domain_id).second) {
      throw Error(ErrorKind::InvalidArgument, "domain id '" + d.domain_id + "' repeated");
    }
    d.grid.validate();
    std::set<std::string> seen;
    for (const auto& ds : d.datasets) {
      catalog.index_of(ds.dataset_id);
      if (!seen.insert(ds.dataset_id).second) {
        throw Error(ErrorKind::InvalidArgument, "dataset '" + ds.dataset_id + "' repeated in a domain");
      }
    }
  }
}

LatentSampler::LatentSampler(const GridSpec& grid, const std::vector<LatentKernel>& kernels) : grid_(grid) {
  grid.validate();
  if (grid.nx > kMaxSampleEdge || grid.ny > kMaxSampleEdge || grid.size() > kMaxSamplePoints) {
    throw Error(ErrorKind::GridTooLarge, std::to_string(grid.nx) + "x" + std::to_string(grid.ny) +
                                             " grid exceeds the exact-sampling bound");
  }
  for (const auto& k : kernels) {
    root_x_.push_back(symmetric_root(axis_kernel(grid.nx, grid.cell_size, k.beta)));
    root_y_.push_back(symmetric_root(axis_kernel(grid.ny, grid.cell_size, k.beta)));
  }
}

Eigen::MatrixXd LatentSampler::draw(Rng& rng) const {
  const int L = static_cast<int>(root_x_.size());
  Eigen::MatrixXd g(grid_.size(), L);
  Eigen::MatrixXd Z(grid_.nx, grid_.ny);
  for (int l = 0; l < L; ++l) {
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, j) = rng.normal();
    }
    // Column-major (col, row) layout matches cell order row * nx + col.
    const Eigen::MatrixXd sample = root_x_[l] * Z * root_y_[l].transpose();
    g.col(l) = Eigen::Map<const Eigen::VectorXd>(sample.data(), grid_.size());
  }
  return g;
}

Eigen::MatrixXd sample_field(const LatentSampler& sampler, const HyperParams& params,
                             const std::vector<int>& rows, Rng& rng) {
  const Eigen::MatrixXd g = sampler.draw(rng);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), g.rows());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int s = rows[k];
    f.row(static_cast<Eigen::Index>(k)) = (g * params.weights.row(s).transpose()).transpose();
    const double lambda = params.noise.lambda[s];
    if (lambda > 0.0) {
      for (Eigen::Index i = 0; i < f.cols(); ++i) f(static_cast<Eigen::Index>(k), i) += lambda * rng.normal();
    }
  }
  return f;
}

std::vector<SynthDomain> sample_ground_truth(const SynthSpec& spec) {
  spec.validate();
  const DatasetCatalog catalog(spec.dataset_ids);
  std::vector<SynthDomain> out;
  for (std::size_t v = 0; v < spec.domains.size(); ++v) {
    const DomainRecipe& recipe = spec.domains[v];
    Rng layout_rng(mix_seed(spec.seed, 2000 + v));
    Rng field_rng(mix_seed(spec.seed, 1000 + v));

    SynthDomain domain;
    domain.domain_id = recipe.domain_id;
    domain.grid = recipe.grid;
    std::vector<int> rows;
    for (const auto& ds : recipe.datasets) rows.push_back(catalog.index_of(ds.dataset_id));

    const LatentSampler sampler(recipe.grid, spec.params.kernels);
    const Eigen::MatrixXd f = sample_field(sampler, spec.params, rows, field_rng);
    domain.field_raw = (spec.offset + spec.scale * f.array()).matrix();

    for (std::size_t k = 0; k < recipe.datasets.size(); ++k) {
      const DatasetRecipe& dr = recipe.datasets[k];
      SynthDataset ds;
      ds.dataset_id = dr.dataset_id;
      ds.scheme = dr.scheme;
      ds.partition = make_partition(dr.partition, recipe.grid, dr.dataset_id, layout_rng);
      const Eigen::VectorXd field = domain.field_raw.row(static_cast<Eigen::Index>(k)).transpose();
      ds.clean_raw = aggregate(ds.partition, ds.scheme, recipe.grid, field);
      const double sigma = std::sqrt(spec.params.noise.sigma2[rows[k]]) * std::abs(spec.scale);
      ds.observed_raw = ds.clean_raw;
      for (Eigen::Index n = 0; n < ds.observed_raw.size(); ++n) ds.observed_raw[n] += sigma * field_rng.normal();
      if (dr.fine) {
        ds.fine = make_partition(*dr.fine, recipe.grid, dr.dataset_id + "_fine", layout_rng);
        ds.fine_truth_raw = aggregate(*ds.fine, ds.scheme, recipe.grid, field);
      }
      domain.datasets.push_back(std::move(ds));
    }
    out.push_back(std::move(domain));
  }
  return out;
}

DomainData SynthDomain::data() const {
  DomainData d;
  d.domain_id = domain_id;
  d.grid = grid;
  for (const auto& ds : datasets) d.datasets.push_back(make_dataset(ds.dataset_id, ds.partition, ds.scheme, ds.observed_raw));
  return d;
}

const SynthDataset& SynthDomain::dataset(const std::string& dataset_id) const {
  for (const auto& ds : datasets) {
    if (ds.dataset_id == dataset_id) return ds;
  }
  throw Error(ErrorKind::UnknownDataset, "dataset '" + dataset_id + "' not in domain '" + domain_id + "'");
}

RefinementTask SynthDomain::task(const std::string& dataset_id, const std::string& task_id) const {
  const SynthDataset& ds = dataset(dataset_id);
  if (!ds.fine) throw Error(ErrorKind::InvalidArgument, "dataset '" + dataset_id + "' has no fine partition");
  return RefinementTask(task_id, domain_id, dataset_id, *ds.fine, ds.scheme, ds.fine_truth_raw);
}

TransferScenario make_transfer_scenario(const SynthSpec& spec) {
  if (spec.domains.size() != 2) throw Error(ErrorKind::InvalidArgument, "a transfer scenario needs V = 2");
  if (spec.domains[1].datasets.size() > 3) {
    throw Error(ErrorKind::InvalidArgument, "the sparse domain may hold at most three datasets");
  }
  auto domains = sample_ground_truth(spec);
  return {std::move(domains[0]), std::move(domains[1])};
}

HyperParams random_generating_params(Rng& rng, int S, const std::vector<double>& betas, double lambda,
                                     double sigma2) {
  const int L = static_cast<int>(betas.size());
  HyperParams p = HyperParams::zeros(S, L);
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < L; ++l) p.weights(s, l) = rng.normal();
  }
  for (int l = 0; l < L; ++l) p.kernels[l].beta = betas[l];
  p.noise.lambda.setConstant(lambda);
  p.noise.sigma2.setConstant(sigma2);
  return p;
}

namespace {

GridSpec scenario_grid() {
  GridSpec g;
  g.cell_size = 1.0;
  g.nx = 24;
  g.ny = 24;
  return g;
}

std::vector<double> scenario_betas(int L) {
  std::vector<double> betas;
  for (int l = 0; l < L; ++l) betas.push_back(L == 1 ? 5.0 : 3.0 * std::pow(8.0 / 3.0, l / double(L - 1)));
  return betas;
}

}  // namespace

SynthSpec refinement_scenario(std::uint64_t seed, int L) {
  SynthSpec spec;
  spec.seed = seed;
  spec.dataset_ids = {"target", "aux_v", "aux_h"};
  Rng rng(mix_seed(seed, 0));
  spec.params = random_generating_params(rng, 3, scenario_betas(L), 0.1, 0.01);
  DomainRecipe d{"d0", scenario_grid(), {}};
  d.datasets.push_back({"target", PartitionRecipe::blocks(2, 2), AggregationScheme::Average,
                        PartitionRecipe::blocks(4, 4)});
  d.datasets.push_back({"aux_v", PartitionRecipe::strips(24, true, 3), AggregationScheme::Average, std::nullopt});
  d.datasets.push_back({"aux_h", PartitionRecipe::strips(24, false, 3), AggregationScheme::Average, std::nullopt});
  spec.domains.push_back(std::move(d));
  return spec;
}

SynthSpec transfer_spec(std::uint64_t seed, bool share_weights, int L) {
  SynthSpec spec;
  spec.seed = seed;
  const std::string sparse_target = share_weights ? "target" : "sparse_target";
  const std::string sparse_aux = share_weights ? "aux_v" : "sparse_aux_v";
  spec.dataset_ids = {"target", "aux_v", "aux_h"};
  if (!share_weights) {
    spec.dataset_ids.push_back(sparse_target);
    spec.dataset_ids.push_back(sparse_aux);
  }
  Rng rng(mix_seed(seed, 0));
  spec.params = random_generating_params(rng, static_cast<int>(spec.dataset_ids.size()), scenario_betas(L), 0.1, 0.01);

  DomainRecipe rich{"rich", scenario_grid(), {}};
  rich.datasets.push_back({"target", PartitionRecipe::blocks(6, 6), AggregationScheme::Average, std::nullopt});
  rich.datasets.push_back({"aux_v", PartitionRecipe::strips(24, true, 3), AggregationScheme::Average, std::nullopt});
  rich.datasets.push_back({"aux_h", PartitionRecipe::strips(24, false, 3), AggregationScheme::Average, std::nullopt});
  DomainRecipe sparse{"sparse", scenario_grid(), {}};
  sparse.datasets.push_back({sparse_target, PartitionRecipe::blocks(2, 2), AggregationScheme::Average,
                             PartitionRecipe::blocks(4, 4)});
  sparse.datasets.push_back({sparse_aux, PartitionRecipe::blocks(4, 4), AggregationScheme::Average, std::nullopt});
  spec.domains.push_back(std::move(rich));
  spec.domains.push_back(std::move(sparse));
  return spec;
}

}  // namespace sagp

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sagp/error.hpp"
#include "sagp/evaluation.hpp"
#include "sagp/kernel.hpp"
#include "sagp/model.hpp"
#include "sagp/synth.hpp"

namespace py = pybind11;
using namespace sagp;

namespace {

using RegionList = std::vector<std::pair<std::string, std::vector<CellIndex>>>;

Partition partition_from_regions(const RegionList& regions, const std::string& partition_id) {
  Partition p;
  p.partition_id = partition_id;
  for (const auto& [id, cells] : regions) p.regions.push_back({id, cells, std::nullopt});
  return p;
}

RegionList region_list(const Partition& p) {
  RegionList out;
  for (const auto& r : p.regions) out.emplace_back(r.region_id, r.cells);
  return out;
}

py::dict prediction_dict(const RegionPrediction& p) {
  py::dict d;
  d["region_ids"] = p.region_ids;
  d["mean"] = p.mean;
  d["variance"] = p.variance;
  d["warnings"] = p.warnings;
  return d;
}

ModelConfig model_config(int L, int restarts, std::uint64_t seed, double jitter, int max_iterations,
                         const std::string& init) {
  ModelConfig c;
  c.L = L;
  c.jitter = jitter;
  c.init = init;
  c.optimizer.restarts = restarts;
  c.optimizer.seed = seed;
  c.optimizer.max_iterations = max_iterations;
  return c;
}

}  // namespace

PYBIND11_MODULE(_sagp, m) {
  m.doc() = "Spatially aggregated Gaussian processes (C++ core).";

  py::register_exception<Error>(m, "SagpError", PyExc_RuntimeError);

  py::enum_<AggregationScheme>(m, "Scheme")
      .value("average", AggregationScheme::Average)
      .value("sum", AggregationScheme::Sum)
      .value("weighted_average", AggregationScheme::WeightedAverage);

  py::class_<GridSpec>(m, "Grid")
      .def(py::init([](int nx, int ny, double cell_size, std::pair<double, double> origin) {
             GridSpec g;
             g.nx = nx;
             g.ny = ny;
             g.cell_size = cell_size;
             g.origin = {origin.first, origin.second};
             g.validate();
             return g;
           }),
           py::arg("nx"), py::arg("ny"), py::arg("cell_size") = 1.0,
           py::arg("origin") = std::pair<double, double>{0.0, 0.0})
      .def_readonly("nx", &GridSpec::nx)
      .def_readonly("ny", &GridSpec::ny)
      .def_readonly("cell_size", &GridSpec::cell_size)
      .def_property_readonly("size", &GridSpec::size)
      .def("center", &GridSpec::center, py::arg("cell"))
      .def("index", &GridSpec::index, py::arg("col"), py::arg("row"))
      .def("__repr__", [](const GridSpec& g) {
        return "Grid(nx=" + std::to_string(g.nx) + ", ny=" + std::to_string(g.ny) + ")";
      });

  py::class_<Partition>(m, "Partition")
      .def(py::init(&partition_from_regions), py::arg("regions"), py::arg("partition_id") = "",
           "From a list of (region_id, cells) pairs.")
      .def_readonly("partition_id", &Partition::partition_id)
      .def_property_readonly("regions", &region_list)
      .def("__len__", &Partition::size);

  py::class_<NormalizationStats>(m, "NormalizationStats")
      .def_readonly("mean", &NormalizationStats::mean)
      .def_readonly("std", &NormalizationStats::std);

  py::class_<DatasetObservations>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("dataset_id"), py::arg("partition"), py::arg("scheme"),
           py::arg("raw"), "Z-scores the raw observations.")
      .def_readonly("dataset_id", &DatasetObservations::dataset_id)
      .def_readonly("partition", &DatasetObservations::partition)
      .def_readonly("scheme", &DatasetObservations::scheme)
      .def_readonly("y", &DatasetObservations::y)
      .def_readonly("stats", &DatasetObservations::stats);

  py::class_<DomainData>(m, "Domain")
      .def(py::init([](std::string domain_id, GridSpec grid, std::vector<DatasetObservations> datasets) {
             DomainData d{std::move(domain_id), grid, std::move(datasets)};
             d.validate();
             return d;
           }),
           py::arg("domain_id"), py::arg("grid"), py::arg("datasets"))
      .def_readonly("domain_id", &DomainData::domain_id)
      .def_readonly("grid", &DomainData::grid)
      .def_readonly("datasets", &DomainData::datasets)
      .def_property_readonly("num_observations", &DomainData::num_observations);

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init([](Eigen::MatrixXd weights, std::vector<double> betas, Eigen::VectorXd lam,
                       Eigen::VectorXd sigma2) {
             HyperParams p;
             p.weights = std::move(weights);
             for (double b : betas) p.kernels.push_back({b});
             p.noise.lambda = std::move(lam);
             p.noise.sigma2 = std::move(sigma2);
             p.validate();
             return p;
           }),
           py::arg("weights"), py::arg("betas"), py::arg("lam"), py::arg("sigma2"))
      .def_readonly("weights", &HyperParams::weights)
      .def_property_readonly("betas",
                             [](const HyperParams& p) {
                               std::vector<double> b;
                               for (const auto& k : p.kernels) b.push_back(k.beta);
                               return b;
                             })
      .def_property_readonly("lam", [](const HyperParams& p) { return p.noise.lambda; })
      .def_property_readonly("sigma2", [](const HyperParams& p) { return p.noise.sigma2; })
      .def("to_text", &format_hyperparams)
      .def_static("from_text", &parse_hyperparams, py::arg("text"));

  py::class_<FittedModel>(m, "FittedModel")
      .def_property_readonly("params", &FittedModel::params)
      .def_property_readonly("dataset_ids", [](const FittedModel& f) { return f.catalog().ids(); })
      .def_property_readonly("log_likelihood", [](const FittedModel& f) { return f.diagnostics().log_likelihood; })
      .def(
          "predict_region",
          [](const FittedModel& f, const std::string& domain_id, const std::string& dataset_id,
             const Partition& partition, AggregationScheme scheme, bool raw) {
            RegionPrediction p = predict_region(f, domain_id, {dataset_id, partition, scheme});
            if (raw) p = to_raw_units(p, f.domain(domain_id).data.dataset(dataset_id).stats);
            return prediction_dict(p);
          },
          py::arg("domain_id"), py::arg("dataset_id"), py::arg("partition"),
          py::arg("scheme") = AggregationScheme::Average, py::arg("raw") = true)
      .def(
          "posterior_point",
          [](const FittedModel& f, const std::string& domain_id, CellIndex cell) {
            const PointPrediction p = posterior_point(f, domain_id, cell);
            return py::make_tuple(p.mean, p.cov);
          },
          py::arg("domain_id"), py::arg("cell"), "Normalized-unit mean (S) and covariance (S x S).")
      .def(
          "raster",
          [](const FittedModel& f, const std::string& domain_id) {
            const GridPrediction g = PosteriorGP(f, domain_id).raster();
            return py::make_tuple(g.mean, g.variance);
          },
          py::arg("domain_id"), "Normalized-unit mean and variance, S x |G|.");

  m.def(
      "log_marginal_likelihood",
      [](const HyperParams& params, const std::vector<DomainData>& domains, double jitter) {
        return log_marginal_likelihood(params, domains, jitter);
      },
      py::arg("params"), py::arg("domains"), py::arg("jitter") = 1e-8);
  m.def(
      "gradient",
      [](const HyperParams& params, const std::vector<DomainData>& domains, double jitter) {
        return gradient(params, domains, jitter);
      },
      py::arg("params"), py::arg("domains"), py::arg("jitter") = 1e-8,
      "Gradient over [W, log beta, log lambda, log sigma].");

  m.def(
      "fit",
      [](std::vector<DomainData> domains, int L, int restarts, std::uint64_t seed, double jitter,
         int max_iterations, const std::string& init) {
        py::gil_scoped_release release;
        return fit(std::move(domains), model_config(L, restarts, seed, jitter, max_iterations, init));
      },
      py::arg("domains"), py::arg("L"), py::arg("restarts") = 5, py::arg("seed") = 0, py::arg("jitter") = 1e-8,
      py::arg("max_iterations") = 200, py::arg("init") = "default");
  m.def(
      "condition",
      [](const HyperParams& params, std::vector<DomainData> domains, double jitter) {
        return condition(params, std::move(domains), jitter);
      },
      py::arg("params"), py::arg("domains"), py::arg("jitter") = 1e-8);

  m.def("mape", &mape, py::arg("y_true"), py::arg("y_pred"));

  m.def(
      "loocv_select_L",
      [](std::vector<DomainData> domains, const std::string& domain_id, const std::string& dataset_id,
         std::vector<int> candidates, int restarts, std::uint64_t seed, double jitter) {
        const RefinementTask task("cv", domain_id, dataset_id, Partition{}, AggregationScheme::Average, {});
        CVResult cv;
        {
          py::gil_scoped_release release;
          cv = loocv_select_L(domains, task, std::move(candidates), model_config(1, restarts, seed, jitter, 200, "default"));
        }
        py::dict errors;
        for (const auto& c : cv.candidates) errors[py::int_(c.L)] = c.mean_error;
        py::dict d;
        d["selected_L"] = cv.selected_L;
        d["errors"] = errors;
        d["warnings"] = cv.warnings;
        return d;
      },
      py::arg("domains"), py::arg("domain_id"), py::arg("dataset_id"), py::arg("candidates"),
      py::arg("restarts") = 3, py::arg("seed") = 0, py::arg("jitter") = 1e-8);

  m.def(
      "refinement_scenario",
      [](std::uint64_t seed, int L) {
        const auto domains = sample_ground_truth(refinement_scenario(seed, L));
        const SynthDomain& d = domains.front();
        const SynthDataset& target = d.dataset("target");
        py::dict out;
        out["domain"] = d.data();
        out["dataset_id"] = target.dataset_id;
        out["fine"] = *target.fine;
        out["fine_truth"] = target.fine_truth_raw;
        return out;
      },
      py::arg("seed"), py::arg("L") = 2,
      "Synthetic refinement task: a domain, the target's fine partition and its raw truth.");
}

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "zsda/evalharness.hpp"
#include "zsda/serialize.hpp"

namespace py = pybind11;
using namespace zsda;

namespace {

LinkSpec link_from_name(const std::string& name, double noise_sigma) {
  if (name == "gaussian") return {LinkKind::Gaussian, noise_sigma};
  if (name == "logistic") return {LinkKind::Logistic, 0.0};
  if (name == "softmax") return {LinkKind::Softmax, 0.0};
  throw DomainError("link must be gaussian|logistic|softmax");
}

BankVariant variant_from_name(const std::string& name) {
  if (name == "factorized") return BankVariant::Factorized;
  if (name == "additive") return BankVariant::Additive;
  if (name == "shared_only") return BankVariant::SharedOnly;
  if (name == "descriptor") return BankVariant::Descriptor;
  throw DomainError("variant must be factorized|additive|shared_only|descriptor");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw DomainError("activation must be relu|tanh|identity");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Zero-shot domain adaptation over multiway domain grids: "
            "rank-K head tensors, completion, and training harness.";

  py::register_exception<BoundsError>(m, "BoundsError", PyExc_IndexError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<VersionError>(m, "VersionError", PyExc_ValueError);
  py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_RuntimeError);

  py::class_<DomainGrid>(m, "DomainGrid")
      .def(py::init<std::vector<int>>(), py::arg("dims"))
      .def_property_readonly("dims", &DomainGrid::dims)
      .def_property_readonly("mode_count", &DomainGrid::mode_count)
      .def_property_readonly("domain_count", &DomainGrid::domain_count)
      .def("flat_index", &DomainGrid::flat_index, py::arg("index"))
      .def("multi_index", &DomainGrid::multi_index, py::arg("t"))
      .def("manhattan", &DomainGrid::manhattan, py::arg("a"), py::arg("b"))
      .def("__repr__", [](const DomainGrid& g) {
        std::string s = "DomainGrid([";
        for (std::size_t i = 0; i < g.dims().size(); ++i)
          s += (i ? "," : "") + std::to_string(g.dims()[i]);
        return s + "])";
      });

  py::class_<CPFactors>(m, "CPFactors")
      .def_readonly("rank", &CPFactors::rank)
      .def_readonly("width", &CPFactors::width)
      .def_readonly("grid", &CPFactors::grid)
      .def("factor", [](const CPFactors& f, int k, int mode) { return f.factor(k, mode); },
           py::arg("k"), py::arg("mode"))
      .def_static(
          "from_arrays",
          [](const DomainGrid& grid, const std::vector<std::vector<Eigen::MatrixXd>>& factors,
             int width) {
            CPFactors f = CPFactors::zeros(static_cast<int>(factors.size()), grid, width);
            for (int k = 0; k < f.rank; ++k)
              for (int mode = 0; mode < grid.mode_count(); ++mode)
                f.factor(k, mode) = factors[static_cast<std::size_t>(k)][static_cast<std::size_t>(mode)];
            f.validate();
            return f;
          },
          py::arg("grid"), py::arg("factors"), py::arg("width"));

  m.def("cp_reconstruct_head", &cp_reconstruct_head, py::arg("factors"), py::arg("index"));
  m.def(
      "cp_materialize",
      [](const CPFactors& f) { return cp_materialize(f).values; },
      py::arg("factors"), "Dense (domain_count x width) array of heads.");
  m.def("additive_to_cp", &additive_to_cp, py::arg("shared"), py::arg("per_mode"));
  m.def("pdim_bound", &pdim_bound, py::arg("rank"), py::arg("d"), py::arg("modes"));
  m.def("completion_generalization_term", &completion_generalization_term, py::arg("rank"),
        py::arg("d_max"), py::arg("modes"), py::arg("width"), py::arg("seen_count"),
        py::arg("delta"));

  py::class_<ObservationMask>(m, "ObservationMask")
      .def_readonly("seen", &ObservationMask::seen)
      .def_readonly("grid", &ObservationMask::grid)
      .def("contains", &ObservationMask::contains, py::arg("t"))
      .def("__len__", &ObservationMask::count);
  m.def("sample_mask", &sample_mask, py::arg("grid"), py::arg("count"), py::arg("seed"));
  m.def("diagonal_mask", &diagonal_mask, py::arg("grid"));
  m.def(
      "explicit_mask",
      [](const DomainGrid& grid, std::vector<int> cells) {
        ObservationMask mask;
        mask.grid = grid;
        std::sort(cells.begin(), cells.end());
        mask.seen = std::move(cells);
        mask.validate();
        return mask;
      },
      py::arg("grid"), py::arg("cells"));

  py::class_<CompletionConfig>(m, "CompletionConfig")
      .def(py::init([](int rank, int max_sweeps, double tol, int restarts, double init_scale,
                       double ridge, std::uint64_t seed) {
             return CompletionConfig{rank, max_sweeps, tol, restarts, init_scale, ridge, seed};
           }),
           py::arg("rank") = 1, py::arg("max_sweeps") = 500, py::arg("tol") = 1e-9,
           py::arg("restarts") = 1, py::arg("init_scale") = 1.0, py::arg("ridge") = 1e-10,
           py::arg("seed") = 0)
      .def_readwrite("rank", &CompletionConfig::rank)
      .def_readwrite("max_sweeps", &CompletionConfig::max_sweeps)
      .def_readwrite("tol", &CompletionConfig::tol)
      .def_readwrite("restarts", &CompletionConfig::restarts)
      .def_readwrite("init_scale", &CompletionConfig::init_scale)
      .def_readwrite("ridge", &CompletionConfig::ridge)
      .def_readwrite("seed", &CompletionConfig::seed);

  py::class_<CompletionResult>(m, "CompletionResult")
      .def_readonly("factors", &CompletionResult::factors)
      .def_readonly("objective_l1", &CompletionResult::objective_l1)
      .def_readonly("objective_l2", &CompletionResult::objective_l2)
      .def_readonly("objective_trace", &CompletionResult::objective_trace)
      .def_readonly("sweeps_used", &CompletionResult::sweeps_used)
      .def_readonly("converged", &CompletionResult::converged)
      .def_readonly("fully_identified", &CompletionResult::fully_identified)
      .def_readonly("rank_saturated", &CompletionResult::rank_saturated);
  m.def("complete", &complete, py::arg("observed"), py::arg("mask"), py::arg("config"),
        "ALS completion of the observed head rows (one row per mask entry).");

  py::class_<PlantedModel>(m, "PlantedModel")
      .def_readonly("factors", &PlantedModel::factors)
      .def_readonly("classes", &PlantedModel::classes)
      .def("head_for", &PlantedModel::head_for, py::arg("index"));
  m.def(
      "plant_model",
      [](const DomainGrid& grid, int input_dim, int rep_dim, int classes, int rank,
         const std::string& link, double noise_sigma, std::uint64_t seed) {
        return plant_model(grid, input_dim, rep_dim, classes, rank,
                           link_from_name(link, noise_sigma), seed);
      },
      py::arg("grid"), py::arg("input_dim"), py::arg("rep_dim"), py::arg("classes"),
      py::arg("rank"), py::arg("link"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
  m.def(
      "plant_additive_model",
      [](const DomainGrid& grid, int rep_dim, int classes, const std::string& link,
         double noise_sigma, std::uint64_t seed) {
        return plant_additive_model(grid, rep_dim, classes, link_from_name(link, noise_sigma),
                                    seed);
      },
      py::arg("grid"), py::arg("rep_dim"), py::arg("classes"), py::arg("link"),
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
  m.def(
      "sample_domain_data",
      [](const PlantedModel& model, const MultiIndex& idx, int n, std::uint64_t seed) {
        const auto samples = sample_domain_data(model, idx, n, seed);
        Eigen::MatrixXd xs(n, model.net.input_dim());
        Eigen::VectorXd ys(n);
        for (int i = 0; i < n; ++i) {
          xs.row(i) = samples[static_cast<std::size_t>(i)].x.transpose();
          ys(i) = samples[static_cast<std::size_t>(i)].y;
        }
        return py::make_tuple(xs, ys);
      },
      py::arg("model"), py::arg("index"), py::arg("n"), py::arg("seed"));

  py::class_<DomainDataset>(m, "DomainDataset")
      .def_readonly("grid", &DomainDataset::grid)
      .def_readonly("input_dim", &DomainDataset::input_dim)
      .def_readonly("classes", &DomainDataset::classes)
      .def_readonly("per_domain", &DomainDataset::per_domain)
      .def_readonly("raster_shape", &DomainDataset::raster_shape)
      .def_property_readonly("total_samples", &DomainDataset::total_samples)
      .def(
          "domain_arrays",
          [](const DomainDataset& ds, int t) {
            const auto& list = ds.samples.at(static_cast<std::size_t>(t));
            Eigen::MatrixXd xs(static_cast<Eigen::Index>(list.size()), ds.input_dim);
            Eigen::VectorXd ys(static_cast<Eigen::Index>(list.size()));
            for (std::size_t i = 0; i < list.size(); ++i) {
              xs.row(static_cast<Eigen::Index>(i)) = list[i].x.transpose();
              ys(static_cast<Eigen::Index>(i)) = list[i].y;
            }
            return py::make_tuple(xs, ys);
          },
          py::arg("t"));
  m.def("planted_dataset", &planted_dataset, py::arg("model"), py::arg("n"), py::arg("seed"));
  m.def(
      "grid_transform_dataset",
      [](const std::vector<double>& rotations_deg,
         const std::vector<std::array<double, 2>>& translations, int classes, int per_domain,
         std::uint64_t seed, const std::string& base, int raster_h, int raster_w, int bumps,
         double bump_sigma, double pixel_noise, int pointset_size, double point_noise,
         const std::string& external_path, std::uint64_t draw_salt) {
        GridTransformConfig cfg;
        cfg.rotations_deg = rotations_deg;
        cfg.translations = translations;
        cfg.classes = classes;
        cfg.per_domain = per_domain;
        cfg.seed = seed;
        cfg.draw_salt = draw_salt;
        if (base == "prototypes")
          cfg.base = GridTransformConfig::Base::SmoothPrototypes;
        else if (base == "pointset")
          cfg.base = GridTransformConfig::Base::PointSet;
        else if (base == "external")
          cfg.base = GridTransformConfig::Base::ExternalFile;
        else
          throw DomainError("base must be prototypes|pointset|external");
        cfg.raster_h = raster_h;
        cfg.raster_w = raster_w;
        cfg.bumps = bumps;
        cfg.bump_sigma = bump_sigma;
        cfg.pixel_noise = pixel_noise;
        cfg.pointset_size = pointset_size;
        cfg.point_noise = point_noise;
        cfg.external_path = external_path;
        return grid_transform_dataset(cfg);
      },
      py::arg("rotations_deg") = std::vector<double>{-30, -15, 0, 15, 30},
      py::arg("translations") =
          std::vector<std::array<double, 2>>{{-3, 0}, {0, -3}, {0, 0}, {0, 3}, {3, 0}},
      py::arg("classes") = 4, py::arg("per_domain") = 200, py::arg("seed") = 0,
      py::arg("base") = "prototypes", py::arg("raster_h") = 16, py::arg("raster_w") = 16,
      py::arg("bumps") = 5, py::arg("bump_sigma") = 2.0, py::arg("pixel_noise") = 0.7,
      py::arg("pointset_size") = 8, py::arg("point_noise") = 0.25,
      py::arg("external_path") = "", py::arg("draw_salt") = 0);
  m.def("transform_raster", &transform_raster, py::arg("image"), py::arg("h"), py::arg("w"),
        py::arg("degrees"), py::arg("d_row"), py::arg("d_col"));
  m.def("transform_points", &transform_points, py::arg("points"), py::arg("degrees"),
        py::arg("d_row"), py::arg("d_col"));
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("dataset"));
  m.def("read_dataset", &read_dataset, py::arg("path"));

  py::class_<ArchConfig>(m, "ArchConfig")
      .def(py::init([](std::vector<int> hidden, const std::string& activation, int rep_dim,
                       int rank, double head_init_scale, bool identity_rep) {
             ArchConfig arch;
             arch.hidden = std::move(hidden);
             arch.activation = activation_from_name(activation);
             arch.rep_dim = rep_dim;
             arch.rank = rank;
             arch.head_init_scale = head_init_scale;
             arch.identity_rep = identity_rep;
             return arch;
           }),
           py::arg("hidden") = std::vector<int>{64}, py::arg("activation") = "relu",
           py::arg("rep_dim") = 16, py::arg("rank") = 2, py::arg("head_init_scale") = 0.1,
           py::arg("identity_rep") = false);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](const std::string& optimizer, double learning_rate, int batch_size,
                       int max_iters, int stop_window, double stop_threshold, double lambda,
                       bool round_robin, std::uint64_t seed) {
             TrainConfig cfg;
             if (optimizer == "adam")
               cfg.optimizer = OptimizerKind::Adam;
             else if (optimizer == "sgd")
               cfg.optimizer = OptimizerKind::Sgd;
             else
               throw DomainError("optimizer must be adam|sgd");
             cfg.learning_rate = learning_rate;
             cfg.batch_size = batch_size;
             cfg.max_iters = max_iters;
             cfg.stop_window = stop_window;
             cfg.stop_threshold = stop_threshold;
             cfg.lambda = lambda;
             cfg.round_robin = round_robin;
             cfg.seed = seed;
             return cfg;
           }),
           py::arg("optimizer") = "adam", py::arg("learning_rate") = 1e-3,
           py::arg("batch_size") = 32, py::arg("max_iters") = 2000, py::arg("stop_window") = 50,
           py::arg("stop_threshold") = 0.05, py::arg("lambda") = 0.05,
           py::arg("round_robin") = false, py::arg("seed") = 0);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_readonly("curve", &TrainedModel::curve)
      .def_readonly("early_stopped", &TrainedModel::early_stopped)
      .def_readonly("iterations_run", &TrainedModel::iterations_run)
      .def_readonly("is_two_stage", &TrainedModel::is_two_stage)
      .def_readonly("stage2_residual_l1", &TrainedModel::stage2_residual_l1)
      .def_readonly("warnings", &TrainedModel::warnings)
      .def_property_readonly("mask", [](const TrainedModel& tm) { return tm.mask; })
      .def("head_for",
           [](const TrainedModel& tm, const MultiIndex& idx) { return tm.model.bank.head_for(idx); },
           py::arg("index"));

  m.def("train_erm", &train_erm, py::arg("dataset"), py::arg("mask"), py::arg("arch"),
        py::arg("config"), py::arg("holdout") = nullptr);
  m.def("two_stage", &two_stage, py::arg("dataset"), py::arg("mask"), py::arg("arch"),
        py::arg("config"), py::arg("completion_config"), py::arg("holdout") = nullptr);
  m.def(
      "train_end_to_end",
      [](const DomainDataset& ds, const ObservationMask& mask, const ArchConfig& arch,
         const std::string& variant, const TrainConfig& cfg) {
        return train_end_to_end(ds, mask, arch, variant_from_name(variant), cfg);
      },
      py::arg("dataset"), py::arg("mask"), py::arg("arch"), py::arg("variant"),
      py::arg("config"));
  m.def("train_pooled_baseline", &train_pooled_baseline, py::arg("dataset"), py::arg("mask"),
        py::arg("arch"), py::arg("config"), py::arg("holdout") = nullptr);

  py::class_<DomainMetrics>(m, "DomainMetrics")
      .def_readonly("flat", &DomainMetrics::flat)
      .def_readonly("index", &DomainMetrics::index)
      .def_readonly("seen", &DomainMetrics::seen)
      .def_readonly("n_test", &DomainMetrics::n_test)
      .def_readonly("accuracy_or_loss", &DomainMetrics::accuracy_or_loss)
      .def_readonly("min_manhattan", &DomainMetrics::min_manhattan)
      .def_readonly("mean_manhattan", &DomainMetrics::mean_manhattan);
  m.def("evaluate", &evaluate, py::arg("model"), py::arg("test"));
  m.def("mean_metric", &mean_metric, py::arg("table"), py::arg("seen"));

  py::class_<ExcessRiskResult>(m, "ExcessRiskResult")
      .def_readonly("per_domain", &ExcessRiskResult::per_domain)
      .def_readonly("per_domain_se", &ExcessRiskResult::per_domain_se)
      .def_readonly("average", &ExcessRiskResult::average)
      .def_readonly("average_se", &ExcessRiskResult::average_se)
      .def_readonly("head_recovery_error", &ExcessRiskResult::head_recovery_error);
  m.def("excess_risk", &excess_risk, py::arg("model"), py::arg("oracle"), py::arg("test"));

  py::class_<DistanceAnalysis>(m, "DistanceAnalysis")
      .def_readonly("spearman_min", &DistanceAnalysis::spearman_min)
      .def_readonly("min_defined", &DistanceAnalysis::min_defined)
      .def_readonly("spearman_mean", &DistanceAnalysis::spearman_mean)
      .def_readonly("mean_defined", &DistanceAnalysis::mean_defined)
      .def_readonly("n_unseen", &DistanceAnalysis::n_unseen);
  m.def("distance_analysis", &distance_analysis, py::arg("table"));

  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("save_oracle", &save_oracle, py::arg("path"), py::arg("oracle"));
  m.def("load_oracle", &load_oracle, py::arg("path"));
}

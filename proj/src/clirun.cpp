#include "zsda/clirun.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "zsda/evalharness.hpp"
#include "zsda/rng.hpp"
#include "zsda/serialize.hpp"

namespace zsda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
  int code;
  std::string category;
  std::string detail;
  std::vector<std::string> violations;
};

[[noreturn]] void cli_fail(int code, const std::string& category, const std::string& detail,
                           std::vector<std::string> violations = {}) {
  throw CliError{code, category, detail, std::move(violations)};
}

// --- config machinery -----------------------------------------------------

bool same_json_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Recursively overlay `user` onto `base`, collecting unknown-key and
// type-mismatch violations instead of stopping at the first one.
void merge_config(json& base, const json& user, const std::string& prefix,
                  std::vector<std::string>& violations) {
  if (!user.is_object()) {
    violations.push_back(prefix.empty() ? "config root must be an object"
                                        : prefix + ": expected an object");
    return;
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      violations.push_back("unknown key: " + path);
      continue;
    }
    json& slot = base[key];
    if (slot.is_object() && !slot.empty()) {
      merge_config(slot, value, path, violations);
    } else if (!same_json_kind(slot, value)) {
      violations.push_back("type mismatch at " + path + ": expected " +
                           std::string(slot.type_name()) + ", got " +
                           std::string(value.type_name()));
    } else {
      slot = value;
    }
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);  // bare strings may come unquoted
  }
}

void apply_override(json& config, const std::string& key, const std::string& value,
                    std::vector<std::string>& violations) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) {
    violations.push_back("empty override key");
    return;
  }
  json* slot = &config;
  std::string path;
  for (const auto& p : parts) {
    path = path.empty() ? p : path + "." + p;
    if (!slot->is_object() || !slot->contains(p)) {
      violations.push_back("unknown key: " + path);
      return;
    }
    slot = &(*slot)[p];
  }
  const json parsed = parse_override_value(value);
  if (!same_json_kind(*slot, parsed) && !slot->is_null()) {
    violations.push_back("type mismatch at " + key + ": expected " +
                         std::string(slot->type_name()) + ", got " +
                         std::string(parsed.type_name()));
    return;
  }
  *slot = parsed;
}

// --- default configs --------------------------------------------------------

json default_arch() {
  return {{"hidden", {64}},       {"activation", "relu"},      {"rep_dim", 16},
          {"rank", 2},            {"head_init_scale", 0.1},    {"identity_rep", false}};
}

json default_train() {
  return {{"optimizer", "adam"},   {"learning_rate", 1e-3}, {"batch_size", 32},
          {"max_iters", 2000},     {"stop_window", 50},     {"stop_threshold", 0.05},
          {"lambda", 0.05},        {"round_robin", false}};
}

json default_completion() {
  return {{"rank", 2},      {"max_sweeps", 500}, {"tol", 1e-9},
          {"restarts", 8},  {"init_scale", 1.0}, {"ridge", 1e-10}};
}

json default_mask() {
  return {{"kind", "uniform"}, {"T", 5}, {"cells", json::array()}};
}

json default_config(const std::string& subcommand) {
  if (subcommand == "generate") {
    return {{"seed", 0},
            {"threads", 1},
            {"kind", "planted"},
            {"planted",
             {{"dims", {3, 3}},
              {"structure", "generic"},
              {"input_dim", 16},
              {"hidden", {64}},
              {"activation", "relu"},
              {"rep_dim", 8},
              {"classes", 2},
              {"rank", 2},
              {"link", "logistic"},
              {"noise_sigma", 0.0},
              {"per_domain", 200},
              {"test_per_domain", 200}}},
            {"grid_transform",
             {{"rotations_deg", {-30.0, -15.0, 0.0, 15.0, 30.0}},
              {"translations", {{-3.0, 0.0}, {0.0, -3.0}, {0.0, 0.0}, {0.0, 3.0}, {3.0, 0.0}}},
              {"classes", 4},
              {"per_domain", 200},
              {"test_per_domain", 200},
              {"base", "prototypes"},
              {"raster_h", 16},
              {"raster_w", 16},
              {"bumps", 5},
              {"bump_sigma", 2.0},
              {"pixel_noise", 0.7},
              {"pointset_size", 8},
              {"point_noise", 0.25},
              {"external_path", ""}}}};
  }
  if (subcommand == "train") {
    return {{"seed", 0},
            {"threads", 1},
            {"data", {{"train", "train.jsonl"}, {"holdout", ""}}},
            {"mode", "two_stage"},
            {"variant", "additive"},
            {"mask", default_mask()},
            {"arch", default_arch()},
            {"train", default_train()},
            {"completion", default_completion()}};
  }
  if (subcommand == "complete") {
    return {{"seed", 0},
            {"threads", 1},
            {"heads", "heads.json"},
            {"mask", {{"kind", "from_file"}, {"T", 0}, {"cells", json::array()}}},
            {"completion", default_completion()}};
  }
  if (subcommand == "evaluate") {
    return {{"seed", 0},
            {"threads", 1},
            {"data", {{"test", "test.jsonl"}}},
            {"model", "checkpoint.json"},
            {"oracle", ""},
            {"bound",
             {{"enabled", true},
              {"delta", 0.05},
              {"auto_constants", true},
              {"B", 1.0},
              {"L", 1.0},
              {"W", 1.0},
              {"D_X", 1.0},
              {"lambda_sc", 1.0},
              {"nu", 1.0},
              {"eps", 0.0}}}};
  }
  if (subcommand == "sweep") {
    return {{"seed", 0},
            {"threads", 1},
            {"vary", "T"},
            {"values", {4, 8, 12, 16, 20}},
            {"seeds", 5},
            {"data", {{"train", "train.jsonl"}, {"test", "test.jsonl"}}},
            {"mask", default_mask()},
            {"trainer",
             {{"kind", "two_stage"},
              {"arch", default_arch()},
              {"train", default_train()},
              {"completion", default_completion()}}}};
  }
  cli_fail(6, "usage-error", "unknown subcommand: " + subcommand);
}

// --- typed config readers -----------------------------------------------------

Activation activation_of(const std::string& name, std::vector<std::string>& violations) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  violations.push_back("arch.activation must be relu|tanh|identity, got " + name);
  return Activation::ReLU;
}

ArchConfig arch_of(const json& j, std::vector<std::string>& violations) {
  ArchConfig arch;
  arch.hidden = j.at("hidden").get<std::vector<int>>();
  arch.activation = activation_of(j.at("activation").get<std::string>(), violations);
  arch.rep_dim = j.at("rep_dim").get<int>();
  arch.rank = j.at("rank").get<int>();
  arch.head_init_scale = j.at("head_init_scale").get<double>();
  arch.identity_rep = j.at("identity_rep").get<bool>();
  if (arch.rep_dim < 1) violations.push_back("arch.rep_dim must be >= 1");
  if (arch.rank < 1) violations.push_back("arch.rank must be >= 1");
  return arch;
}

TrainConfig train_of(const json& j, std::uint64_t seed, std::vector<std::string>& violations) {
  TrainConfig cfg;
  const std::string opt = j.at("optimizer").get<std::string>();
  if (opt == "adam")
    cfg.optimizer = OptimizerKind::Adam;
  else if (opt == "sgd")
    cfg.optimizer = OptimizerKind::Sgd;
  else
    violations.push_back("train.optimizer must be adam|sgd, got " + opt);
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.max_iters = j.at("max_iters").get<int>();
  cfg.stop_window = j.at("stop_window").get<int>();
  cfg.stop_threshold = j.at("stop_threshold").get<double>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.round_robin = j.at("round_robin").get<bool>();
  cfg.seed = seed;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    violations.push_back(e.what());
  }
  return cfg;
}

CompletionConfig completion_of(const json& j, std::uint64_t seed,
                               std::vector<std::string>& violations) {
  CompletionConfig cfg;
  cfg.rank = j.at("rank").get<int>();
  cfg.max_sweeps = j.at("max_sweeps").get<int>();
  cfg.tol = j.at("tol").get<double>();
  cfg.restarts = j.at("restarts").get<int>();
  cfg.init_scale = j.at("init_scale").get<double>();
  cfg.ridge = j.at("ridge").get<double>();
  cfg.seed = seed;
  if (cfg.rank < 1) violations.push_back("completion.rank must be >= 1");
  if (cfg.tol <= 0) violations.push_back("completion.tol must be > 0");
  if (cfg.restarts < 1) violations.push_back("completion.restarts must be >= 1");
  if (cfg.ridge < 0) violations.push_back("completion.ridge must be >= 0");
  return cfg;
}

ObservationMask mask_of(const json& j, const DomainGrid& grid, std::uint64_t seed) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return sample_mask(grid, j.at("T").get<int>(), seed);
  if (kind == "diagonal") return diagonal_mask(grid);
  if (kind == "explicit") {
    ObservationMask mask;
    mask.grid = grid;
    mask.seen = j.at("cells").get<std::vector<int>>();
    std::sort(mask.seen.begin(), mask.seen.end());
    mask.validate();
    return mask;
  }
  cli_fail(3, "config-invalid", "mask.kind must be uniform|diagonal|explicit, got " + kind);
}

void require_new_file(const fs::path& path) {
  if (fs::exists(path))
    cli_fail(4, "output-exists",
             "refusing to overwrite " + path.string() + "; outputs are write-once per run directory");
}

std::ofstream open_output(const fs::path& path) {
  require_new_file(path);
  std::ofstream out(path);
  if (!out) cli_fail(4, "io-error", "cannot open " + path.string());
  return out;
}

// --- subcommands ---------------------------------------------------------------

void cmd_generate(const json& cfg, const fs::path& outdir, std::ostream& log) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const std::string kind = cfg.at("kind").get<std::string>();

  if (kind == "planted") {
    const json& p = cfg.at("planted");
    std::vector<std::string> violations;
    const Activation act = activation_of(p.at("activation").get<std::string>(), violations);
    if (!violations.empty())
      cli_fail(3, "config-invalid", "invalid generator config", violations);

    std::vector<int> widths;
    widths.push_back(p.at("input_dim").get<int>());
    const auto hidden = p.at("hidden").get<std::vector<int>>();
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(p.at("rep_dim").get<int>());
    std::vector<Activation> acts(widths.size() - 2, act);

    // `classes` counts label values; the head carries one column per logit,
    // which is 1 for the scalar links.
    const std::string link_name = p.at("link").get<std::string>();
    const int label_classes = p.at("classes").get<int>();
    LinkSpec link;
    int model_classes = 1;
    if (link_name == "gaussian") {
      link = {LinkKind::Gaussian, p.at("noise_sigma").get<double>()};
      if (label_classes != 1)
        cli_fail(3, "config-invalid", "planted.classes must be 1 for the gaussian link");
    } else if (link_name == "logistic") {
      link = {LinkKind::Logistic, 0.0};
      if (label_classes != 2)
        cli_fail(3, "config-invalid", "planted.classes must be 2 for the logistic link");
    } else if (link_name == "softmax") {
      link = {LinkKind::Softmax, 0.0};
      model_classes = label_classes;
    } else {
      cli_fail(3, "config-invalid", "planted.link must be gaussian|logistic|softmax");
    }

    const DomainGrid grid(p.at("dims").get<std::vector<int>>());
    const std::string structure = p.at("structure").get<std::string>();
    PlantedModel model;
    if (structure == "generic") {
      model = plant_model(grid, widths, acts, model_classes, p.at("rank").get<int>(), link,
                          derive_seed(seed, 0));
    } else if (structure == "additive") {
      // Identity representation by construction; rank comes out as M+1.
      model = plant_additive_model(grid, p.at("rep_dim").get<int>(), model_classes, link,
                                   derive_seed(seed, 0));
    } else {
      cli_fail(3, "config-invalid", "planted.structure must be generic|additive");
    }
    DomainDataset train = planted_dataset(model, p.at("per_domain").get<int>(), derive_seed(seed, 1));
    DomainDataset test =
        planted_dataset(model, p.at("test_per_domain").get<int>(), derive_seed(seed, 2));

    require_new_file(outdir / "train.jsonl");
    require_new_file(outdir / "test.jsonl");
    require_new_file(outdir / "oracle.json");
    write_dataset((outdir / "train.jsonl").string(), train);
    write_dataset((outdir / "test.jsonl").string(), test);
    save_oracle((outdir / "oracle.json").string(), model);
    log << "generated planted datasets: D=" << grid.domain_count()
        << " train_n=" << train.per_domain << " test_n=" << test.per_domain << "\n";
    return;
  }

  if (kind == "grid_transform") {
    const json& g = cfg.at("grid_transform");
    GridTransformConfig gt;
    gt.rotations_deg = g.at("rotations_deg").get<std::vector<double>>();
    gt.translations = g.at("translations").get<std::vector<std::array<double, 2>>>();
    gt.classes = g.at("classes").get<int>();
    gt.per_domain = g.at("per_domain").get<int>();
    gt.seed = seed;
    const std::string base = g.at("base").get<std::string>();
    if (base == "prototypes")
      gt.base = GridTransformConfig::Base::SmoothPrototypes;
    else if (base == "pointset")
      gt.base = GridTransformConfig::Base::PointSet;
    else if (base == "external")
      gt.base = GridTransformConfig::Base::ExternalFile;
    else
      cli_fail(3, "config-invalid", "grid_transform.base must be prototypes|pointset|external");
    gt.raster_h = g.at("raster_h").get<int>();
    gt.raster_w = g.at("raster_w").get<int>();
    gt.bumps = g.at("bumps").get<int>();
    gt.bump_sigma = g.at("bump_sigma").get<double>();
    gt.pixel_noise = g.at("pixel_noise").get<double>();
    gt.pointset_size = g.at("pointset_size").get<int>();
    gt.point_noise = g.at("point_noise").get<double>();
    gt.external_path = g.at("external_path").get<std::string>();

    gt.draw_salt = 1;
    DomainDataset train = grid_transform_dataset(gt);
    gt.draw_salt = 2;
    gt.per_domain = g.at("test_per_domain").get<int>();
    DomainDataset test = grid_transform_dataset(gt);

    require_new_file(outdir / "train.jsonl");
    require_new_file(outdir / "test.jsonl");
    write_dataset((outdir / "train.jsonl").string(), train);
    write_dataset((outdir / "test.jsonl").string(), test);
    log << "generated grid-transform datasets: D=" << train.grid.domain_count()
        << " train_n=" << train.per_domain << " test_n=" << test.per_domain << "\n";
    return;
  }

  cli_fail(3, "config-invalid", "kind must be planted|grid_transform, got " + kind);
}

DomainDataset load_dataset_checked(const std::string& path) {
  if (!fs::exists(path)) cli_fail(2, "config-not-found", "dataset file not found: " + path);
  return read_dataset(path);
}

void cmd_train(const json& cfg, const fs::path& outdir, std::ostream& log) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  std::vector<std::string> violations;
  const ArchConfig arch = arch_of(cfg.at("arch"), violations);
  const TrainConfig train_cfg = train_of(cfg.at("train"), derive_seed(seed, 32), violations);
  const CompletionConfig comp_cfg =
      completion_of(cfg.at("completion"), derive_seed(seed, 33), violations);
  if (!violations.empty()) cli_fail(3, "config-invalid", "invalid train config", violations);

  const DomainDataset train_ds = load_dataset_checked(cfg.at("data").at("train").get<std::string>());
  DomainDataset holdout;
  const std::string holdout_path = cfg.at("data").at("holdout").get<std::string>();
  const bool has_holdout = !holdout_path.empty();
  if (has_holdout) holdout = load_dataset_checked(holdout_path);

  const ObservationMask mask = mask_of(cfg.at("mask"), train_ds.grid, derive_seed(seed, 31));
  const std::string mode = cfg.at("mode").get<std::string>();

  TrainedModel model;
  if (mode == "two_stage") {
    model = two_stage(train_ds, mask, arch, train_cfg, comp_cfg, has_holdout ? &holdout : nullptr);
  } else if (mode == "erm") {
    model = train_erm(train_ds, mask, arch, train_cfg, has_holdout ? &holdout : nullptr);
  } else if (mode == "pooled") {
    model = train_pooled_baseline(train_ds, mask, arch, train_cfg, has_holdout ? &holdout : nullptr);
  } else if (mode == "end_to_end") {
    const std::string variant = cfg.at("variant").get<std::string>();
    BankVariant v;
    if (variant == "factorized")
      v = BankVariant::Factorized;
    else if (variant == "additive")
      v = BankVariant::Additive;
    else if (variant == "shared_only")
      v = BankVariant::SharedOnly;
    else if (variant == "descriptor")
      v = BankVariant::Descriptor;
    else
      cli_fail(3, "config-invalid",
               "variant must be factorized|additive|shared_only|descriptor, got " + variant);
    model = train_end_to_end(train_ds, mask, arch, v, train_cfg, has_holdout ? &holdout : nullptr);
  } else {
    cli_fail(3, "config-invalid", "mode must be two_stage|erm|end_to_end|pooled, got " + mode);
  }

  require_new_file(outdir / "checkpoint.json");
  require_new_file(outdir / "curve.csv");
  save_checkpoint((outdir / "checkpoint.json").string(), model);
  emit_training_curve_csv((outdir / "curve.csv").string(), model);

  json summary;
  summary["iterations_run"] = model.iterations_run;
  summary["early_stopped"] = model.early_stopped;
  summary["final_loss"] = model.curve.empty() ? json(nullptr) : json(model.curve.back());
  summary["warnings"] = model.warnings;
  summary["mask"] = model.mask.seen;
  if (model.is_two_stage) {
    summary["stage2_residual_l1"] = model.stage2_residual_l1;
    summary["completion_fully_identified"] = model.completion_fully_identified;
    summary["completion_converged"] = model.completion_converged;
  }
  open_output(outdir / "summary.json") << summary.dump(2) << "\n";
  log << "trained " << mode << ": iterations=" << model.iterations_run
      << (model.early_stopped ? " (early stop)" : "") << "\n";
}

void cmd_complete(const json& cfg, const fs::path& outdir, std::ostream& log) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  std::vector<std::string> violations;
  const CompletionConfig comp_cfg =
      completion_of(cfg.at("completion"), derive_seed(seed, 33), violations);
  if (!violations.empty()) cli_fail(3, "config-invalid", "invalid completion config", violations);

  const std::string heads_path = cfg.at("heads").get<std::string>();
  if (!fs::exists(heads_path)) cli_fail(2, "config-not-found", "heads file not found: " + heads_path);
  auto [heads, file_mask] = read_head_tensor(heads_path);

  ObservationMask mask;
  const std::string mask_kind = cfg.at("mask").at("kind").get<std::string>();
  if (mask_kind == "from_file") {
    if (file_mask.empty())
      cli_fail(5, "data-error", "heads file carries no mask and mask.kind is from_file");
    mask.grid = heads.grid;
    mask.seen = file_mask;
    std::sort(mask.seen.begin(), mask.seen.end());
    mask.validate();
  } else {
    mask = mask_of(cfg.at("mask"), heads.grid, derive_seed(seed, 31));
  }

  Eigen::MatrixXd observed(mask.count(), heads.width);
  for (int i = 0; i < mask.count(); ++i)
    observed.row(i) = heads.values.row(mask.seen[static_cast<std::size_t>(i)]);

  const CompletionResult result = complete(observed, mask, comp_cfg);
  const HeadTensor completed = cp_materialize(result.factors);

  require_new_file(outdir / "factors.json");
  require_new_file(outdir / "completed.json");
  write_factors((outdir / "factors.json").string(), result.factors);
  write_head_tensor((outdir / "completed.json").string(), completed, &mask.seen);

  json res;
  res["objective_l1"] = result.objective_l1;
  res["objective_l2"] = result.objective_l2;
  res["sweeps_used"] = result.sweeps_used;
  res["converged"] = result.converged;
  res["fully_identified"] = result.fully_identified;
  res["rank_saturated"] = result.rank_saturated;
  open_output(outdir / "result.json") << res.dump(2) << "\n";
  log << "completion: L1=" << result.objective_l1 << " sweeps=" << result.sweeps_used << "\n";
}

void cmd_evaluate(const json& cfg, const fs::path& outdir, std::ostream& log) {
  const std::string model_path = cfg.at("model").get<std::string>();
  if (!fs::exists(model_path)) cli_fail(2, "config-not-found", "checkpoint not found: " + model_path);
  const TrainedModel model = load_checkpoint(model_path);
  const DomainDataset test = load_dataset_checked(cfg.at("data").at("test").get<std::string>());

  ExperimentReport report;
  report.kind = "evaluation";
  report.config_echo = cfg.dump();
  report.table = evaluate(model, test);

  try {
    report.distance = distance_analysis(report.table);
    report.has_distance = true;
  } catch (const DataError&) {
    // fewer than 3 unseen domains; section omitted
  }

  const std::string oracle_path = cfg.at("oracle").get<std::string>();
  if (!oracle_path.empty()) {
    if (!fs::exists(oracle_path))
      cli_fail(2, "config-not-found", "oracle file not found: " + oracle_path);
    const PlantedModel oracle = load_oracle(oracle_path);
    report.excess = excess_risk(model, oracle, test);
    report.has_excess = true;
  }

  const json& bound_cfg = cfg.at("bound");
  if (bound_cfg.at("enabled").get<bool>() && model.is_two_stage) {
    BoundParams params;
    std::string provenance = "user";
    if (bound_cfg.at("auto_constants").get<bool>()) {
      params = auto_bound_params(model, test, bound_cfg.at("delta").get<double>());
      provenance = "auto(head_norms, representation_norm_bound)";
    } else {
      params.loss_bound = bound_cfg.at("B").get<double>();
      params.loss_lipschitz = bound_cfg.at("L").get<double>();
      params.head_norm_bound = bound_cfg.at("W").get<double>();
      params.rep_norm_bound = bound_cfg.at("D_X").get<double>();
      params.strong_convexity = bound_cfg.at("lambda_sc").get<double>();
      params.diversity_nu = bound_cfg.at("nu").get<double>();
      params.diversity_eps = bound_cfg.at("eps").get<double>();
      params.delta = bound_cfg.at("delta").get<double>();
    }
    report.bound = bound_diagnostic(params, model);
    report.bound.constants_provenance = provenance;
    if (report.has_excess) {
      report.bound.measured_average_excess = report.excess.average;
      report.bound.has_measurement = true;
    }
    report.has_bound = true;
  }

  require_new_file(outdir / "report.txt");
  require_new_file(outdir / "domains.csv");
  emit_report(report, (outdir / "report.txt").string());
  emit_domain_csv((outdir / "domains.csv").string(), report.table);
  log << "evaluated " << report.table.size() << " domains"
      << (report.has_excess ? " (with oracle excess risk)" : "") << "\n";
}

void cmd_sweep(const json& cfg, const fs::path& outdir, std::ostream& log) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const int threads = cfg.at("threads").get<int>();
  std::vector<std::string> violations;

  const json& tj = cfg.at("trainer");
  SweepTrainer trainer;
  const std::string kind = tj.at("kind").get<std::string>();
  if (kind == "two_stage")
    trainer.kind = TrainerKind::TwoStage;
  else if (kind == "end_to_end_factorized")
    trainer.kind = TrainerKind::EndToEndFactorized;
  else if (kind == "end_to_end_additive")
    trainer.kind = TrainerKind::EndToEndAdditive;
  else if (kind == "end_to_end_descriptor")
    trainer.kind = TrainerKind::EndToEndDescriptor;
  else if (kind == "end_to_end_shared_only")
    trainer.kind = TrainerKind::EndToEndSharedOnly;
  else if (kind == "pooled_baseline")
    trainer.kind = TrainerKind::PooledBaseline;
  else
    violations.push_back("trainer.kind unknown: " + kind);
  trainer.arch = arch_of(tj.at("arch"), violations);
  trainer.train = train_of(tj.at("train"), 0, violations);
  trainer.completion = completion_of(tj.at("completion"), 0, violations);
  if (!violations.empty()) cli_fail(3, "config-invalid", "invalid sweep config", violations);

  const DomainDataset train_ds = load_dataset_checked(cfg.at("data").at("train").get<std::string>());
  const DomainDataset test_ds = load_dataset_checked(cfg.at("data").at("test").get<std::string>());
  const int seeds = cfg.at("seeds").get<int>();
  const std::string vary = cfg.at("vary").get<std::string>();

  ExperimentReport report;
  if (vary == "T") {
    const auto values = cfg.at("values").get<std::vector<int>>();
    report = sweep_T(train_ds, test_ds, values, seeds, trainer, seed, threads);
  } else if (vary == "lambda") {
    const auto values = cfg.at("values").get<std::vector<double>>();
    const ObservationMask mask = mask_of(cfg.at("mask"), train_ds.grid, derive_seed(seed, 31));
    report = sweep_lambda(train_ds, test_ds, mask, values, seeds, trainer, seed, threads);
  } else {
    cli_fail(3, "config-invalid", "vary must be T|lambda, got " + vary);
  }

  require_new_file(outdir / "report.txt");
  emit_report(report, (outdir / "report.txt").string());
  auto curve_csv = open_output(outdir / "sweep_curve.csv");
  curve_csv << "value,runs,applicable,mean_unseen,std_unseen,mean_seen,std_seen\n";
  for (const auto& p : report.curve) {
    auto num = [](double v) { return std::isfinite(v) ? json(v).dump() : std::string(); };
    curve_csv << json(p.value).dump() << "," << p.runs << "," << (p.applicable ? 1 : 0) << ","
              << num(p.mean_unseen) << "," << num(p.std_unseen) << "," << num(p.mean_seen) << ","
              << num(p.std_seen) << "\n";
  }
  log << "sweep " << vary << ": " << report.runs.size() << " runs\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty())
      cli_fail(6, "usage-error",
               "usage: zsda <generate|train|complete|evaluate|sweep> [--config PATH] "
               "[--set KEY=VALUE]... [--out DIR] [--seed N] [--threads N]");
    const std::string subcommand = args[0];

    std::string config_path;
    std::string out_dir = ".";
    std::vector<std::pair<std::string, std::string>> overrides;
    bool seed_set = false, threads_set = false;
    std::uint64_t seed = 0;
    int threads = 1;

    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& arg = args[i];
      auto next = [&]() -> const std::string& {
        if (i + 1 >= args.size()) cli_fail(6, "usage-error", arg + " requires a value");
        return args[++i];
      };
      if (arg == "--config") {
        config_path = next();
      } else if (arg == "--set") {
        const std::string& kv = next();
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          cli_fail(6, "usage-error", "--set expects KEY=VALUE, got " + kv);
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      } else if (arg == "--out") {
        out_dir = next();
      } else if (arg == "--seed") {
        seed = std::stoull(next());
        seed_set = true;
      } else if (arg == "--threads") {
        threads = std::stoi(next());
        threads_set = true;
      } else {
        cli_fail(6, "usage-error", "unknown flag: " + arg);
      }
    }

    json config = default_config(subcommand);
    std::vector<std::string> violations;
    if (!config_path.empty()) {
      if (!fs::exists(config_path))
        cli_fail(2, "config-not-found", "config file not found: " + config_path);
      std::ifstream in(config_path);
      json user;
      try {
        user = json::parse(in);
      } catch (const json::parse_error& e) {
        cli_fail(3, "config-invalid", std::string("config parse error: ") + e.what());
      }
      merge_config(config, user, "", violations);
    }
    for (const auto& [key, value] : overrides) apply_override(config, key, value, violations);
    if (seed_set) config["seed"] = seed;
    if (threads_set) config["threads"] = threads;
    if (!violations.empty())
      cli_fail(3, "config-invalid",
               std::to_string(violations.size()) + " config violation(s)", violations);

    const fs::path outdir(out_dir);
    std::error_code ec;
    fs::create_directories(outdir, ec);
    if (ec) cli_fail(4, "io-error", "cannot create output directory " + outdir.string());

    // Resolved config is echoed before any work happens.
    open_output(outdir / "config.json") << config.dump(2) << "\n";

    if (subcommand == "generate")
      cmd_generate(config, outdir, out);
    else if (subcommand == "train")
      cmd_train(config, outdir, out);
    else if (subcommand == "complete")
      cmd_complete(config, outdir, out);
    else if (subcommand == "evaluate")
      cmd_evaluate(config, outdir, out);
    else if (subcommand == "sweep")
      cmd_sweep(config, outdir, out);
    else
      cli_fail(6, "usage-error", "unknown subcommand: " + subcommand);
    return 0;
  } catch (const CliError& e) {
    err << "error: " << e.category << ": " << e.detail << "\n";
    for (const auto& v : e.violations) err << "  - " << v << "\n";
    return e.code;
  } catch (const ParseError& e) {
    err << "error: parse-error: " << e.what() << "\n";
    return 5;
  } catch (const VersionError& e) {
    err << "error: version-error: " << e.what() << "\n";
    return 5;
  } catch (const DataError& e) {
    err << "error: data-error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    err << "error: internal-error: " << e.what() << "\n";
    return 10;
  }
}

}  // namespace zsda

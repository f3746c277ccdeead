#include "zsda/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "zsda/rng.hpp"

namespace zsda {

using nlohmann::json;

namespace {

bool is_classification(const LossSpec& spec) { return spec.kind != LossKind::Squared; }

int predict_class(const LossSpec& spec, const Eigen::VectorXd& logits) {
  if (spec.kind == LossKind::Logistic) return logits(0) > 0.0 ? 1 : 0;
  int best = 0;
  for (int c = 1; c < static_cast<int>(logits.size()); ++c)
    if (logits(c) > logits(best)) best = c;  // ties keep the lowest index
  return best;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty())
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (xs.size() - 1))};
}

json double_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double json_double(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::vector<DomainMetrics> evaluate(const TrainedModel& model, const DomainDataset& test) {
  test.validate();
  if (!(test.grid == model.mask.grid))
    throw ShapeError("evaluate: test grid does not match the training grid");

  std::vector<MultiIndex> seen_idx;
  seen_idx.reserve(model.mask.seen.size());
  for (int t : model.mask.seen) seen_idx.push_back(test.grid.multi_index(t));

  std::vector<DomainMetrics> table;
  table.reserve(static_cast<std::size_t>(test.grid.domain_count()));
  for (int t = 0; t < test.grid.domain_count(); ++t) {
    DomainMetrics row;
    row.flat = t;
    row.index = test.grid.multi_index(t);
    row.seen = model.mask.contains(t);
    const auto& samples = test.samples[static_cast<std::size_t>(t)];
    row.n_test = static_cast<int>(samples.size());

    int min_d = std::numeric_limits<int>::max();
    long long sum_d = 0;
    for (const auto& s : seen_idx) {
      const int d = test.grid.manhattan(row.index, s);
      min_d = std::min(min_d, d);
      sum_d += d;
    }
    row.min_manhattan = static_cast<double>(min_d);
    row.mean_manhattan = static_cast<double>(sum_d) / static_cast<double>(seen_idx.size());

    if (!samples.empty()) {
      Eigen::MatrixXd head;
      try {
        head = model.model.bank.head_for(row.index);
      } catch (const BoundsError&) {
        std::ostringstream os;
        os << "evaluate: no head available for domain " << t << " (multi-index";
        for (int v : row.index) os << " " << v;
        os << ")";
        throw UnsupportedError(os.str());
      }
      double acc_or_loss = 0.0;
      for (const auto& s : samples) {
        const Eigen::VectorXd logits = head.transpose() * model.model.net.forward(s.x);
        if (is_classification(model.loss))
          acc_or_loss += predict_class(model.loss, logits) == static_cast<int>(s.y) ? 1.0 : 0.0;
        else
          acc_or_loss += loss_value(model.loss, logits, s.y);
      }
      row.accuracy_or_loss = acc_or_loss / static_cast<double>(samples.size());
    }
    table.push_back(std::move(row));
  }
  return table;
}

double mean_metric(const std::vector<DomainMetrics>& table, bool seen) {
  double sum = 0.0;
  int count = 0;
  for (const auto& row : table) {
    if (row.seen != seen || row.n_test == 0) continue;
    sum += row.accuracy_or_loss;
    ++count;
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

ExcessRiskResult excess_risk(const TrainedModel& model, const PlantedModel& oracle,
                             const DomainDataset& test) {
  test.validate();
  const Model oracle_model = oracle.as_model();
  const LossSpec spec = oracle.loss_spec();
  if (spec.classes != model.loss.classes || spec.kind != model.loss.kind)
    throw ShapeError("excess_risk: model and oracle loss specs differ");

  const DomainGrid& grid = test.grid;
  ExcessRiskResult out;
  out.per_domain.resize(static_cast<std::size_t>(grid.domain_count()));
  out.per_domain_se.resize(static_cast<std::size_t>(grid.domain_count()));

  double se_sq_sum = 0.0;
  for (int t = 0; t < grid.domain_count(); ++t) {
    const auto& samples = test.samples[static_cast<std::size_t>(t)];
    if (samples.empty()) {
      std::ostringstream os;
      os << "excess_risk: domain " << t << " has no held-out samples";
      throw DataError(os.str());
    }
    const MultiIndex idx = grid.multi_index(t);
    const Eigen::MatrixXd head = model.model.bank.head_for(idx);
    const Eigen::MatrixXd oracle_head = oracle_model.bank.head_for(idx);

    // Paired per-sample differences: identical predictors give exactly zero.
    std::vector<double> diffs;
    diffs.reserve(samples.size());
    for (const auto& s : samples) {
      const double lm = loss_value(spec, head.transpose() * model.model.net.forward(s.x), s.y);
      const double lo =
          loss_value(spec, oracle_head.transpose() * oracle_model.net.forward(s.x), s.y);
      diffs.push_back(lm - lo);
    }
    const auto [mean, sd] = mean_sd(diffs);
    out.per_domain[static_cast<std::size_t>(t)] = mean;
    const double se = sd / std::sqrt(static_cast<double>(diffs.size()));
    out.per_domain_se[static_cast<std::size_t>(t)] = se;
    out.average += mean;
    se_sq_sum += se * se;
  }
  out.average /= static_cast<double>(grid.domain_count());
  out.average_se = std::sqrt(se_sq_sum) / static_cast<double>(grid.domain_count());

  // The quantity controlled on seen domains: mean head distance to truth.
  if (model.model.bank.rep_dim == oracle.net.output_dim() &&
      model.model.bank.classes == oracle.classes) {
    double sum = 0.0;
    bool ok = true;
    for (int t : model.mask.seen) {
      const MultiIndex idx = grid.multi_index(t);
      Eigen::MatrixXd learned;
      if (model.is_two_stage && model.stage1_heads.size() > 0) {
        const auto pos = std::lower_bound(model.mask.seen.begin(), model.mask.seen.end(), t) -
                         model.mask.seen.begin();
        const Eigen::VectorXd w = model.stage1_heads.row(pos).transpose();
        learned = Eigen::Map<const Eigen::MatrixXd>(w.data(), model.model.bank.rep_dim,
                                                    model.model.bank.classes);
      } else {
        try {
          learned = model.model.bank.head_for(idx);
        } catch (const BoundsError&) {
          ok = false;
          break;
        }
      }
      sum += (learned - oracle.head_for(idx)).norm();
    }
    if (ok) out.head_recovery_error = sum / static_cast<double>(model.mask.count());
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b, bool* defined) {
  if (a.size() != b.size() || a.size() < 2) {
    if (defined) *defined = false;
    return std::numeric_limits<double>::quiet_NaN();
  }
  auto ranks = [](const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) {
    if (defined) *defined = false;
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (defined) *defined = true;
  return cov / std::sqrt(va * vb);
}

DistanceAnalysis distance_analysis(const std::vector<DomainMetrics>& table) {
  std::vector<double> acc, dmin, dmean;
  for (const auto& row : table) {
    if (row.seen || row.n_test == 0 || !std::isfinite(row.accuracy_or_loss)) continue;
    acc.push_back(row.accuracy_or_loss);
    dmin.push_back(row.min_manhattan);
    dmean.push_back(row.mean_manhattan);
  }
  if (acc.size() < 3)
    throw DataError("distance_analysis: at least 3 unseen domains with data required");
  DistanceAnalysis out;
  out.n_unseen = static_cast<int>(acc.size());
  out.spearman_min = spearman(acc, dmin, &out.min_defined);
  out.spearman_mean = spearman(acc, dmean, &out.mean_defined);
  return out;
}

BoundDiagnostic bound_diagnostic(const BoundParams& params, const TrainedModel& run) {
  params.validate();
  if (!run.is_two_stage || !std::isfinite(run.stage2_residual_l1))
    throw UnsupportedError(
        "bound_diagnostic: stage-2 residuals are only recorded for two-stage runs");
  const auto* fac = std::get_if<FactorizedHeads>(&run.model.bank.payload);
  if (fac == nullptr)
    throw UnsupportedError("bound_diagnostic: two-stage run must carry factorized heads");

  BoundDiagnostic diag;
  diag.params = params;
  diag.rank = fac->factors.rank;
  diag.d_max = run.mask.grid.max_dim();
  diag.modes = run.mask.grid.mode_count();
  diag.width = run.model.bank.head_width();
  diag.seen_count = run.mask.count();

  const double scale =
      params.loss_lipschitz * params.rep_norm_bound * params.head_norm_bound;
  diag.term_residual = scale * run.stage2_residual_l1;
  diag.term_generalization =
      scale * completion_generalization_term(diag.rank, diag.d_max, diag.modes, diag.width,
                                             diag.seen_count, params.delta);
  return diag;
}

BoundParams auto_bound_params(const TrainedModel& run, const DomainDataset& data, double delta) {
  BoundParams params;
  params.delta = delta;
  switch (run.loss.kind) {
    case LossKind::Logistic:
      params.loss_lipschitz = 1.0;
      break;
    case LossKind::SoftmaxCrossEntropy:
      params.loss_lipschitz = std::sqrt(2.0);
      break;
    case LossKind::Squared:
      throw UnsupportedError(
          "auto_bound_params: the squared loss has no data-free Lipschitz constant; supply one");
  }
  double w = 0.0;
  for (const auto& [t, norm] : head_norms(run.model.bank)) w = std::max(w, norm);
  params.head_norm_bound = std::max(w, 1e-12);
  params.rep_norm_bound =
      std::max(representation_norm_bound(run.model.net, data.pooled()), 1e-12);
  return params;
}

// --- sweeps -----------------------------------------------------------------

TrainedModel run_trainer(const SweepTrainer& trainer, const DomainDataset& train_ds,
                         const ObservationMask& mask, std::uint64_t run_seed) {
  TrainConfig cfg = trainer.train;
  cfg.seed = run_seed;
  switch (trainer.kind) {
    case TrainerKind::TwoStage: {
      CompletionConfig ccfg = trainer.completion;
      ccfg.seed = derive_seed(run_seed, 21);
      return two_stage(train_ds, mask, trainer.arch, cfg, ccfg);
    }
    case TrainerKind::EndToEndFactorized:
      return train_end_to_end(train_ds, mask, trainer.arch, BankVariant::Factorized, cfg);
    case TrainerKind::EndToEndAdditive:
      return train_end_to_end(train_ds, mask, trainer.arch, BankVariant::Additive, cfg);
    case TrainerKind::EndToEndDescriptor:
      return train_end_to_end(train_ds, mask, trainer.arch, BankVariant::Descriptor, cfg);
    case TrainerKind::EndToEndSharedOnly:
      return train_end_to_end(train_ds, mask, trainer.arch, BankVariant::SharedOnly, cfg);
    case TrainerKind::PooledBaseline:
      return train_pooled_baseline(train_ds, mask, trainer.arch, cfg);
  }
  throw DomainError("unknown trainer kind");
}

void parallel_runs(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

std::string trainer_name(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::TwoStage:
      return "two_stage";
    case TrainerKind::EndToEndFactorized:
      return "end_to_end_factorized";
    case TrainerKind::EndToEndAdditive:
      return "end_to_end_additive";
    case TrainerKind::EndToEndDescriptor:
      return "end_to_end_descriptor";
    case TrainerKind::EndToEndSharedOnly:
      return "end_to_end_shared_only";
    case TrainerKind::PooledBaseline:
      return "pooled_baseline";
  }
  return "?";
}

CurvePoint aggregate_runs(double value, const std::vector<RunRow>& rows) {
  CurvePoint point;
  point.value = value;
  std::vector<double> unseen, seen;
  for (const auto& row : rows) {
    if (row.sweep_value != value) continue;
    ++point.runs;
    if (row.applicable && std::isfinite(row.unseen_accuracy)) unseen.push_back(row.unseen_accuracy);
    if (std::isfinite(row.seen_accuracy)) seen.push_back(row.seen_accuracy);
  }
  point.applicable = !unseen.empty();
  if (point.applicable) std::tie(point.mean_unseen, point.std_unseen) = mean_sd(unseen);
  if (!seen.empty()) std::tie(point.mean_seen, point.std_seen) = mean_sd(seen);
  return point;
}

}  // namespace

ExperimentReport sweep_T(const DomainDataset& train_ds, const DomainDataset& test_ds,
                         const std::vector<int>& t_values, int seeds,
                         const SweepTrainer& trainer, std::uint64_t master_seed, int threads) {
  if (t_values.empty() || seeds < 1) throw DomainError("sweep_T: empty sweep");
  for (int t : t_values)
    if (t < 1 || t > train_ds.grid.domain_count())
      throw DomainError("sweep_T: T outside [1, D]");

  const auto t0 = std::chrono::steady_clock::now();
  const int total = static_cast<int>(t_values.size()) * seeds;
  std::vector<RunRow> rows(static_cast<std::size_t>(total));
  parallel_runs(total, threads, [&](int run) {
    const int ti = run / seeds;
    const int s = run % seeds;
    RunRow row;
    row.sweep_value = static_cast<double>(t_values[static_cast<std::size_t>(ti)]);
    row.seed_index = s;
    row.run_seed = derive_seed(master_seed, static_cast<std::uint64_t>(run));
    const ObservationMask mask = sample_mask(
        train_ds.grid, t_values[static_cast<std::size_t>(ti)], derive_seed(row.run_seed, 1));
    const TrainedModel model = run_trainer(trainer, train_ds, mask, derive_seed(row.run_seed, 2));
    const auto table = evaluate(model, test_ds);
    row.seen_accuracy = mean_metric(table, true);
    row.applicable = mask.count() < train_ds.grid.domain_count();
    if (row.applicable) row.unseen_accuracy = mean_metric(table, false);
    row.stage2_residual = model.stage2_residual_l1;
    rows[static_cast<std::size_t>(run)] = row;
  });

  ExperimentReport report;
  report.kind = "sweep_T";
  report.runs = std::move(rows);
  for (int t : t_values) report.curve.push_back(aggregate_runs(static_cast<double>(t), report.runs));
  json echo;
  echo["sweep"] = "T";
  echo["values"] = t_values;
  echo["seeds"] = seeds;
  echo["trainer"] = trainer_name(trainer.kind);
  echo["master_seed"] = master_seed;
  report.config_echo = echo.dump();
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<double> default_lambda_values() { return {0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0}; }

ExperimentReport sweep_lambda(const DomainDataset& train_ds, const DomainDataset& test_ds,
                              const ObservationMask& mask, const std::vector<double>& lambdas,
                              int seeds, const SweepTrainer& trainer, std::uint64_t master_seed,
                              int threads) {
  if (lambdas.empty() || seeds < 1) throw DomainError("sweep_lambda: empty sweep");
  for (double l : lambdas)
    if (l < 0.0) throw DomainError("sweep_lambda: lambda must be >= 0");

  const auto t0 = std::chrono::steady_clock::now();
  const int total = static_cast<int>(lambdas.size()) * seeds;
  std::vector<RunRow> rows(static_cast<std::size_t>(total));
  parallel_runs(total, threads, [&](int run) {
    const int li = run / seeds;
    const int s = run % seeds;
    RunRow row;
    row.sweep_value = lambdas[static_cast<std::size_t>(li)];
    row.seed_index = s;
    row.run_seed = derive_seed(master_seed, static_cast<std::uint64_t>(run));
    SweepTrainer local = trainer;
    local.train.lambda = row.sweep_value;
    const TrainedModel model = run_trainer(local, train_ds, mask, derive_seed(row.run_seed, 2));
    const auto table = evaluate(model, test_ds);
    row.seen_accuracy = mean_metric(table, true);
    row.applicable = mask.count() < train_ds.grid.domain_count();
    if (row.applicable) row.unseen_accuracy = mean_metric(table, false);
    row.stage2_residual = model.stage2_residual_l1;
    rows[static_cast<std::size_t>(run)] = row;
  });

  ExperimentReport report;
  report.kind = "sweep_lambda";
  report.runs = std::move(rows);
  for (double l : lambdas) report.curve.push_back(aggregate_runs(l, report.runs));
  json echo;
  echo["sweep"] = "lambda";
  echo["values"] = lambdas;
  echo["seeds"] = seeds;
  echo["trainer"] = trainer_name(trainer.kind);
  echo["master_seed"] = master_seed;
  report.config_echo = echo.dump();
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// --- report emission -----------------------------------------------------------

namespace {

json metrics_to_json(const DomainMetrics& row) {
  json j;
  j["flat"] = row.flat;
  j["index"] = row.index;
  j["seen"] = row.seen;
  j["n_test"] = row.n_test;
  j["metric"] = double_or_null(row.accuracy_or_loss);
  j["min_manhattan"] = row.min_manhattan;
  j["mean_manhattan"] = row.mean_manhattan;
  return j;
}

DomainMetrics metrics_from_json(const json& j) {
  DomainMetrics row;
  row.flat = j.at("flat").get<int>();
  row.index = j.at("index").get<MultiIndex>();
  row.seen = j.at("seen").get<bool>();
  row.n_test = j.at("n_test").get<int>();
  row.accuracy_or_loss = json_double(j.at("metric"));
  row.min_manhattan = j.at("min_manhattan").get<double>();
  row.mean_manhattan = j.at("mean_manhattan").get<double>();
  return row;
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("emit_report: cannot open " + path);

  json header;
  header["version"] = 1;
  header["kind"] = report.kind.empty() ? "report" : report.kind;
  out << header.dump() << "\n";

  if (!report.config_echo.empty()) out << "[config] " << report.config_echo << "\n";
  for (const auto& row : report.table) out << "[domain] " << metrics_to_json(row).dump() << "\n";
  for (const auto& run : report.runs) {
    json j;
    j["value"] = run.sweep_value;
    j["seed_index"] = run.seed_index;
    j["run_seed"] = run.run_seed;
    j["applicable"] = run.applicable;
    j["unseen"] = double_or_null(run.unseen_accuracy);
    j["seen"] = double_or_null(run.seen_accuracy);
    j["stage2_residual"] = double_or_null(run.stage2_residual);
    out << "[run] " << j.dump() << "\n";
  }
  for (const auto& point : report.curve) {
    json j;
    j["value"] = point.value;
    j["runs"] = point.runs;
    j["applicable"] = point.applicable;
    j["mean_unseen"] = double_or_null(point.mean_unseen);
    j["std_unseen"] = double_or_null(point.std_unseen);
    j["mean_seen"] = double_or_null(point.mean_seen);
    j["std_seen"] = double_or_null(point.std_seen);
    out << "[curve] " << j.dump() << "\n";
  }
  if (report.has_distance) {
    json j;
    j["spearman_min"] = double_or_null(report.distance.spearman_min);
    j["min_defined"] = report.distance.min_defined;
    j["spearman_mean"] = double_or_null(report.distance.spearman_mean);
    j["mean_defined"] = report.distance.mean_defined;
    j["n_unseen"] = report.distance.n_unseen;
    out << "[distance] " << j.dump() << "\n";
  }
  if (report.has_bound) {
    const auto& b = report.bound;
    json j;
    j["term_residual"] = double_or_null(b.term_residual);
    j["term_generalization"] = double_or_null(b.term_generalization);
    j["unestimated"] = b.unestimated;
    j["measured_average_excess"] = double_or_null(b.measured_average_excess);
    j["has_measurement"] = b.has_measurement;
    j["constants_provenance"] = b.constants_provenance;
    j["rank"] = b.rank;
    j["d_max"] = b.d_max;
    j["modes"] = b.modes;
    j["width"] = b.width;
    j["seen_count"] = b.seen_count;
    j["params"] = {{"B", b.params.loss_bound},
                   {"L", b.params.loss_lipschitz},
                   {"W", b.params.head_norm_bound},
                   {"D_X", b.params.rep_norm_bound},
                   {"lambda_sc", b.params.strong_convexity},
                   {"nu", b.params.diversity_nu},
                   {"eps", b.params.diversity_eps},
                   {"delta", b.params.delta}};
    out << "[bound] " << j.dump() << "\n";
  }
  if (report.has_excess) {
    json j;
    j["average"] = double_or_null(report.excess.average);
    j["average_se"] = double_or_null(report.excess.average_se);
    j["head_recovery_error"] = double_or_null(report.excess.head_recovery_error);
    json per = json::array();
    for (std::size_t t = 0; t < report.excess.per_domain.size(); ++t)
      per.push_back({{"flat", t},
                     {"estimate", double_or_null(report.excess.per_domain[t])},
                     {"se", double_or_null(report.excess.per_domain_se[t])}});
    j["per_domain"] = per;
    out << "[excess] " << j.dump() << "\n";
  }
  if (!out) throw DataError("emit_report: write failed for " + path);
}

ExperimentReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_report: cannot open " + path);

  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << path << ": line " << lineno << ": " << what;
    throw ParseError(os.str());
  };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header");
  }
  lineno = 1;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (!header.contains("version")) fail("header missing version");
  if (header["version"].get<int>() != 1)
    throw VersionError(path + ": unsupported report version " + header["version"].dump());

  ExperimentReport report;
  report.kind = header.value("kind", "report");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (line.front() != '[' || space == std::string::npos) fail("expected a section tag");
    const std::string tag = line.substr(0, space);
    json j;
    try {
      j = json::parse(line.substr(space + 1));
    } catch (const json::parse_error& e) {
      fail(std::string("bad section payload: ") + e.what());
    }
    try {
      if (tag == "[config]") {
        report.config_echo = j.dump();
      } else if (tag == "[domain]") {
        report.table.push_back(metrics_from_json(j));
      } else if (tag == "[run]") {
        RunRow run;
        run.sweep_value = j.at("value").get<double>();
        run.seed_index = j.at("seed_index").get<int>();
        run.run_seed = j.at("run_seed").get<std::uint64_t>();
        run.applicable = j.at("applicable").get<bool>();
        run.unseen_accuracy = json_double(j.at("unseen"));
        run.seen_accuracy = json_double(j.at("seen"));
        run.stage2_residual = json_double(j.at("stage2_residual"));
        report.runs.push_back(run);
      } else if (tag == "[curve]") {
        CurvePoint point;
        point.value = j.at("value").get<double>();
        point.runs = j.at("runs").get<int>();
        point.applicable = j.at("applicable").get<bool>();
        point.mean_unseen = json_double(j.at("mean_unseen"));
        point.std_unseen = json_double(j.at("std_unseen"));
        point.mean_seen = json_double(j.at("mean_seen"));
        point.std_seen = json_double(j.at("std_seen"));
        report.curve.push_back(point);
      } else if (tag == "[distance]") {
        report.has_distance = true;
        report.distance.spearman_min = json_double(j.at("spearman_min"));
        report.distance.min_defined = j.at("min_defined").get<bool>();
        report.distance.spearman_mean = json_double(j.at("spearman_mean"));
        report.distance.mean_defined = j.at("mean_defined").get<bool>();
        report.distance.n_unseen = j.at("n_unseen").get<int>();
      } else if (tag == "[bound]") {
        report.has_bound = true;
        auto& b = report.bound;
        b.term_residual = json_double(j.at("term_residual"));
        b.term_generalization = json_double(j.at("term_generalization"));
        b.unestimated = j.at("unestimated").get<std::string>();
        b.measured_average_excess = json_double(j.at("measured_average_excess"));
        b.has_measurement = j.at("has_measurement").get<bool>();
        b.constants_provenance = j.at("constants_provenance").get<std::string>();
        b.rank = j.at("rank").get<int>();
        b.d_max = j.at("d_max").get<int>();
        b.modes = j.at("modes").get<int>();
        b.width = j.at("width").get<int>();
        b.seen_count = j.at("seen_count").get<int>();
        const auto& p = j.at("params");
        b.params.loss_bound = p.at("B").get<double>();
        b.params.loss_lipschitz = p.at("L").get<double>();
        b.params.head_norm_bound = p.at("W").get<double>();
        b.params.rep_norm_bound = p.at("D_X").get<double>();
        b.params.strong_convexity = p.at("lambda_sc").get<double>();
        b.params.diversity_nu = p.at("nu").get<double>();
        b.params.diversity_eps = p.at("eps").get<double>();
        b.params.delta = p.at("delta").get<double>();
      } else if (tag == "[excess]") {
        report.has_excess = true;
        report.excess.average = json_double(j.at("average"));
        report.excess.average_se = json_double(j.at("average_se"));
        report.excess.head_recovery_error = json_double(j.at("head_recovery_error"));
        for (const auto& row : j.at("per_domain")) {
          report.excess.per_domain.push_back(json_double(row.at("estimate")));
          report.excess.per_domain_se.push_back(json_double(row.at("se")));
        }
      } else {
        // Unknown sections are skipped for forward compatibility.
      }
    } catch (const json::exception& e) {
      fail(std::string("bad section field: ") + e.what());
    }
  }
  return report;
}

namespace {

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "";
  return json(v).dump();  // shortest round-trip form
}

}  // namespace

void emit_domain_csv(const std::string& path, const std::vector<DomainMetrics>& table) {
  std::ofstream out(path);
  if (!out) throw DataError("emit_domain_csv: cannot open " + path);
  out << "flat_index,multi_index,seen,n_test,accuracy_or_loss,min_manhattan,mean_manhattan\n";
  for (const auto& row : table) {
    out << row.flat << ",";
    for (std::size_t m = 0; m < row.index.size(); ++m)
      out << (m > 0 ? "-" : "") << row.index[m];
    out << "," << (row.seen ? 1 : 0) << "," << row.n_test << "," << csv_num(row.accuracy_or_loss)
        << "," << csv_num(row.min_manhattan) << "," << csv_num(row.mean_manhattan) << "\n";
  }
}

void emit_training_curve_csv(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("emit_training_curve_csv: cannot open " + path);
  const bool holdout = !model.holdout_curve.empty();
  out << (holdout ? "iteration,loss,holdout_loss\n" : "iteration,loss\n");
  std::size_t h = 0;
  for (std::size_t i = 0; i < model.curve.size(); ++i) {
    out << i << "," << csv_num(model.curve[i]);
    if (holdout) {
      std::string extra;
      if (h < model.holdout_curve.size() &&
          model.holdout_curve[h].first == static_cast<int>(i)) {
        extra = csv_num(model.holdout_curve[h].second);
        ++h;
      }
      out << "," << extra;
    }
    out << "\n";
  }
}

void emit_grid_table(const std::string& path, const DomainGrid& grid,
                     const std::vector<std::vector<DomainMetrics>>& per_seed_tables) {
  if (grid.mode_count() != 2)
    throw UnsupportedError("emit_grid_table: grid-shaped export requires two modes");
  if (per_seed_tables.empty()) throw DataError("emit_grid_table: no tables");
  std::ofstream out(path);
  if (!out) throw DataError("emit_grid_table: cannot open " + path);

  out << "rows=mode0,cols=mode1,cell=mean(std)";
  for (int j = 0; j < grid.dim(1); ++j) out << ",level" << j;
  out << "\n";
  for (int i = 0; i < grid.dim(0); ++i) {
    out << "level" << i;
    for (int j = 0; j < grid.dim(1); ++j) {
      const int t = grid.flat_index({i, j});
      std::vector<double> vals;
      bool seen = false;
      for (const auto& table : per_seed_tables) {
        const auto& row = table[static_cast<std::size_t>(t)];
        seen = seen || row.seen;
        if (!row.seen && std::isfinite(row.accuracy_or_loss)) vals.push_back(row.accuracy_or_loss);
      }
      out << ",";
      if (!seen && !vals.empty()) {
        const auto [mean, sd] = mean_sd(vals);
        out << csv_num(mean) << "(" << csv_num(sd) << ")";
      }
    }
    out << "\n";
  }
}

}  // namespace zsda

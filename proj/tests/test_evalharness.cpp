#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zsda/evalharness.hpp"
#include "zsda/rng.hpp"

using namespace zsda;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TrainedModel wrap_planted(const PlantedModel& planted, const ObservationMask& mask) {
  TrainedModel out;
  out.model = planted.as_model();
  out.loss = planted.loss_spec();
  out.mask = mask;
  return out;
}

std::vector<DomainMetrics> synthetic_table(const DomainGrid& grid, const ObservationMask& mask,
                                           const std::vector<double>& unseen_accuracy) {
  std::vector<DomainMetrics> table;
  std::size_t u = 0;
  for (int t = 0; t < grid.domain_count(); ++t) {
    DomainMetrics row;
    row.flat = t;
    row.index = grid.multi_index(t);
    row.seen = mask.contains(t);
    row.n_test = 10;
    int dmin = std::numeric_limits<int>::max();
    long long dsum = 0;
    for (int s : mask.seen) {
      const int d = grid.manhattan(row.index, grid.multi_index(s));
      dmin = std::min(dmin, d);
      dsum += d;
    }
    row.min_manhattan = dmin;
    row.mean_manhattan = static_cast<double>(dsum) / mask.seen.size();
    row.accuracy_or_loss = row.seen ? 1.0 : unseen_accuracy.at(u++);
    table.push_back(row);
  }
  return table;
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("planted predictor on its own noiseless regression data has zero loss") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 1, {LinkKind::Gaussian, 0.0}, 3);
  const DomainDataset test = planted_dataset(planted, 100, 4);
  const TrainedModel model = wrap_planted(planted, sample_mask(grid, 2, 0));
  const auto table = evaluate(model, test);
  for (const auto& row : table) {
    CHECK(row.n_test == 100);
    CHECK(row.accuracy_or_loss <= 1e-20);
  }
}

TEST_CASE("seen flags mirror the training mask and distances vanish exactly on it") {
  DomainGrid grid({3, 3});
  const PlantedModel planted = plant_model(grid, 4, 3, 3, 1, {LinkKind::Softmax, 0.0}, 5);
  const DomainDataset test = planted_dataset(planted, 20, 6);
  const ObservationMask mask = sample_mask(grid, 4, 9);
  const auto table = evaluate(wrap_planted(planted, mask), test);
  for (const auto& row : table) {
    CHECK(row.seen == mask.contains(row.flat));
    CHECK((row.min_manhattan == 0.0) == row.seen);
    if (!row.seen) CHECK(row.min_manhattan > 0.0);
  }
}

TEST_CASE("any fixed model scores near 1/C when labels are uniform (3-sigma binomial)") {
  DomainGrid grid({2, 2});
  const int classes = 4;
  const PlantedModel model = plant_model(grid, 4, 3, classes, 1, {LinkKind::Softmax, 0.0}, 7);

  // Balanced data with labels independent of x: accuracy is Binomial(1/C).
  DomainDataset test = planted_dataset(model, 2000, 8);
  auto rng = make_rng(81);
  std::uniform_int_distribution<int> pick(0, classes - 1);
  for (auto& domain : test.samples)
    for (auto& s : domain) s.y = pick(rng);

  const auto table = evaluate(wrap_planted(model, sample_mask(grid, 4, 0)), test);
  const double p = 1.0 / classes;
  for (const auto& row : table) {
    const double se = std::sqrt(p * (1.0 - p) / row.n_test);
    CHECK(std::abs(row.accuracy_or_loss - p) <= 3.0 * se);
  }
}

TEST_CASE("evaluate names the domain when a head is missing") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 1, {LinkKind::Logistic, 0.0}, 9);
  const DomainDataset test = planted_dataset(planted, 5, 10);
  TrainedModel model;
  model.loss = planted.loss_spec();
  model.mask = sample_mask(grid, 2, 3);
  model.model.net = planted.net;
  model.model.bank = HeadBank::make_free(grid, 3, 1, model.mask.seen);
  try {
    evaluate(model, test);
    FAIL("expected UnsupportedError");
  } catch (const UnsupportedError& e) {
    CHECK(std::string(e.what()).find("no head available for domain") != std::string::npos);
  }
}

TEST_CASE("excess risk of the oracle against itself is exactly zero") {
  DomainGrid grid({2, 3});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 2, {LinkKind::Logistic, 0.0}, 11);
  const DomainDataset test = planted_dataset(planted, 500, 12);
  const TrainedModel model = wrap_planted(planted, sample_mask(grid, 3, 1));
  const ExcessRiskResult result = excess_risk(model, planted, test);
  CHECK(result.average == 0.0);
  CHECK(result.average_se == 0.0);
  for (double v : result.per_domain) CHECK(v == 0.0);
  CHECK(result.head_recovery_error == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("excess risk of a perturbed model is non-negative within 2 standard errors") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 1, {LinkKind::Logistic, 0.0}, 13);
  const DomainDataset test = planted_dataset(planted, 2000, 14);
  PlantedModel perturbed = planted;
  auto rng = make_rng(15);
  std::normal_distribution<double> gauss(0.0, 0.2);
  for (int k = 0; k < perturbed.factors.rank; ++k)
    for (int m = 0; m < grid.mode_count(); ++m)
      for (Eigen::Index i = 0; i < perturbed.factors.factor(k, m).size(); ++i)
        *(perturbed.factors.factor(k, m).data() + i) += gauss(rng);
  const TrainedModel model = wrap_planted(perturbed, sample_mask(grid, 4, 0));
  const ExcessRiskResult result = excess_risk(model, planted, test);
  CHECK(result.average >= -2.0 * result.average_se);
  CHECK(result.head_recovery_error > 0.0);
}

TEST_CASE("spearman handles perfect order, ties, and degenerate columns") {
  bool defined = false;
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}, &defined) == doctest::Approx(-1.0));
  CHECK(defined);
  CHECK(spearman({1, 2, 3, 4}, {1, 2, 3, 4}, &defined) == doctest::Approx(1.0));
  spearman({1, 1, 1}, {1, 2, 3}, &defined);
  CHECK_FALSE(defined);
}

TEST_CASE("distance analysis on the diagonal design") {
  DomainGrid grid({5, 5});
  const ObservationMask mask = diagonal_mask(grid);

  // The worked example: cell (4,0) sits 4 units from its nearest seen cell.
  std::vector<DomainMetrics> probe = synthetic_table(grid, mask, std::vector<double>(20, 0.5));
  for (const auto& row : probe)
    if (row.index == MultiIndex{4, 0}) CHECK(row.min_manhattan == 4.0);

  // Accuracy strictly decreasing in min distance => Spearman exactly -1.
  std::vector<double> unseen;
  for (const auto& row : probe)
    if (!row.seen) unseen.push_back(1.0 - 0.1 * row.min_manhattan);
  const auto table = synthetic_table(grid, mask, unseen);
  const DistanceAnalysis analysis = distance_analysis(table);
  CHECK(analysis.n_unseen == 20);
  CHECK(analysis.min_defined);
  CHECK(analysis.spearman_min == doctest::Approx(-1.0));

  // Permuted accuracies decorrelate: the mean over seeded permutations is
  // near zero even though individual draws are not.
  auto rng = make_rng(77);
  double total = 0.0;
  const int reps = 300;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> shuffled = unseen;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto t = synthetic_table(grid, mask, shuffled);
    bool defined = false;
    std::vector<double> acc, dmin;
    for (const auto& row : t)
      if (!row.seen) {
        acc.push_back(row.accuracy_or_loss);
        dmin.push_back(row.min_manhattan);
      }
    total += spearman(acc, dmin, &defined);
  }
  CHECK(std::abs(total / reps) < 0.05);

  // Constant unseen accuracy makes the correlation undefined, not zero.
  const auto flat_table = synthetic_table(grid, mask, std::vector<double>(20, 0.25));
  const DistanceAnalysis degenerate = distance_analysis(flat_table);
  CHECK_FALSE(degenerate.min_defined);

  // Fewer than 3 unseen domains is an error.
  DomainGrid tiny({2, 2});
  ObservationMask tiny_mask = sample_mask(tiny, 3, 0);
  std::vector<DomainMetrics> small = synthetic_table(tiny, tiny_mask, {0.5});
  CHECK_THROWS_AS(distance_analysis(small), DataError);
}

TEST_CASE("distance metrics are invariant to reversing a mode's level order") {
  DomainGrid grid({4, 4});
  const ObservationMask mask = diagonal_mask(grid);
  const auto table = synthetic_table(grid, mask, std::vector<double>(12, 0.5));

  ObservationMask reversed_mask;
  reversed_mask.grid = grid;
  for (int s : mask.seen) {
    MultiIndex idx = grid.multi_index(s);
    idx[0] = grid.dim(0) - 1 - idx[0];
    reversed_mask.seen.push_back(grid.flat_index(idx));
  }
  std::sort(reversed_mask.seen.begin(), reversed_mask.seen.end());
  const auto reversed = synthetic_table(grid, reversed_mask, std::vector<double>(12, 0.5));

  for (const auto& row : table) {
    MultiIndex idx = row.index;
    idx[0] = grid.dim(0) - 1 - idx[0];
    const auto& mirror = reversed[static_cast<std::size_t>(grid.flat_index(idx))];
    CHECK(row.min_manhattan == mirror.min_manhattan);
    CHECK(row.mean_manhattan == doctest::Approx(mirror.mean_manhattan).epsilon(1e-12));
  }
}

TEST_CASE("bound diagnostic composes the formula terms exactly") {
  DomainGrid grid({3, 3});
  const PlantedModel planted = plant_model(grid, std::vector<int>{4}, {}, 1, 1, {LinkKind::Gaussian, 0.0}, 21);
  const DomainDataset ds = planted_dataset(planted, 150, 22);
  const ObservationMask mask = sample_mask(grid, 7, 23);
  ArchConfig arch;
  arch.identity_rep = true;
  arch.hidden = {};
  TrainConfig cfg;
  cfg.max_iters = 400;
  cfg.lambda = 0.0;
  cfg.seed = 24;
  CompletionConfig ccfg;
  ccfg.rank = 1;
  ccfg.restarts = 3;
  const TrainedModel run = two_stage(ds, mask, arch, cfg, ccfg);

  BoundParams params;
  params.loss_lipschitz = 2.0;
  params.rep_norm_bound = 3.0;
  params.head_norm_bound = 0.5;
  params.delta = 0.05;
  const BoundDiagnostic diag = bound_diagnostic(params, run);
  const double scale = 2.0 * 3.0 * 0.5;
  CHECK(diag.term_residual == doctest::Approx(scale * run.stage2_residual_l1).epsilon(1e-12));
  const double term2 = completion_generalization_term(1, 3, 2, 4, 7, 0.05);
  CHECK(diag.term_generalization == doctest::Approx(scale * term2).epsilon(1e-12));

  // With unit constants, term (i) IS the recorded stage-2 residual.
  BoundParams unit;
  const BoundDiagnostic unit_diag = bound_diagnostic(unit, run);
  CHECK(unit_diag.term_residual == doctest::Approx(run.stage2_residual_l1).epsilon(1e-15));

  // Doubling T shrinks term (ii) by sqrt(2) up to the log term.
  const double t1 = completion_generalization_term(1, 3, 2, 4, 7, 0.05);
  const double t2 = completion_generalization_term(1, 3, 2, 4, 14, 0.05);
  CHECK(t1 / t2 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  // Not available for models without stage-2 residuals.
  const TrainedModel e2e = train_end_to_end(ds, mask, arch, BankVariant::Additive, cfg);
  CHECK_THROWS_AS(bound_diagnostic(unit, e2e), UnsupportedError);
}

TEST_CASE("auto bound params pull constants from the run") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 1, {LinkKind::Logistic, 0.0}, 31);
  const DomainDataset ds = planted_dataset(planted, 50, 32);
  const TrainedModel model = wrap_planted(planted, sample_mask(grid, 4, 0));
  const BoundParams params = auto_bound_params(model, ds, 0.05);
  CHECK(params.loss_lipschitz == 1.0);
  double max_norm = 0.0;
  for (const auto& [t, n] : head_norms(model.model.bank)) max_norm = std::max(max_norm, n);
  CHECK(params.head_norm_bound == doctest::Approx(max_norm));
  CHECK(params.rep_norm_bound ==
        doctest::Approx(representation_norm_bound(model.model.net, ds.pooled())));
}

TEST_CASE("sweep over T keeps per-run rows, aggregates, and the T=D rule") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, std::vector<int>{3}, {}, 1, 1, {LinkKind::Logistic, 0.0}, 41);
  const DomainDataset train = planted_dataset(planted, 60, 42);
  const DomainDataset test = planted_dataset(planted, 60, 43);
  SweepTrainer trainer;
  trainer.kind = TrainerKind::TwoStage;
  trainer.arch.identity_rep = true;
  trainer.arch.hidden = {};
  trainer.train.max_iters = 100;
  trainer.train.lambda = 0.0;
  trainer.completion.rank = 1;
  trainer.completion.restarts = 2;

  const ExperimentReport report = sweep_T(train, test, {2, 4}, 3, trainer, 99, 2);
  CHECK(report.runs.size() == 6);
  REQUIRE(report.curve.size() == 2);

  // Aggregates must be recomputable from the retained rows.
  for (const auto& point : report.curve) {
    std::vector<double> unseen;
    for (const auto& run : report.runs)
      if (run.sweep_value == point.value && run.applicable) unseen.push_back(run.unseen_accuracy);
    if (point.applicable) {
      const double mean = std::accumulate(unseen.begin(), unseen.end(), 0.0) / unseen.size();
      CHECK(point.mean_unseen == doctest::Approx(mean).epsilon(1e-12));
      double ss = 0.0;
      for (double v : unseen) ss += (v - mean) * (v - mean);
      const double sd = unseen.size() > 1 ? std::sqrt(ss / (unseen.size() - 1)) : 0.0;
      CHECK(point.std_unseen == doctest::Approx(sd).epsilon(1e-12));
    }
  }

  // T = D: the unseen set is empty and the point is not-applicable.
  const CurvePoint full = report.curve[1];
  CHECK(full.value == 4.0);
  CHECK_FALSE(full.applicable);
  CHECK(std::isnan(full.mean_unseen));
  for (const auto& run : report.runs)
    if (run.sweep_value == 4.0) {
      CHECK_FALSE(run.applicable);
      CHECK(std::isnan(run.unseen_accuracy));
    }
}

TEST_CASE("lambda sweep defaults and zero-lambda support") {
  CHECK(default_lambda_values() == std::vector<double>{0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0});

  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, std::vector<int>{3}, {}, 1, 1, {LinkKind::Logistic, 0.0}, 51);
  const DomainDataset train = planted_dataset(planted, 40, 52);
  const DomainDataset test = planted_dataset(planted, 40, 53);
  SweepTrainer trainer;
  trainer.kind = TrainerKind::EndToEndAdditive;
  trainer.arch.identity_rep = true;
  trainer.arch.hidden = {};
  trainer.train.max_iters = 60;
  const ObservationMask mask = sample_mask(grid, 3, 1);
  const ExperimentReport report = sweep_lambda(train, test, mask, {0.0, 0.05}, 2, trainer, 7, 2);
  CHECK(report.runs.size() == 4);
  for (const auto& run : report.runs) CHECK(std::isfinite(run.unseen_accuracy));
}

TEST_CASE("report round trip preserves every written section") {
  DomainGrid grid({2, 2});
  const ObservationMask mask = sample_mask(grid, 2, 5);
  ExperimentReport report;
  report.kind = "evaluation";
  report.config_echo = R"({"alpha":1,"beta":"two"})";
  report.table = synthetic_table(grid, mask, {0.25, 0.75});
  report.table[1].accuracy_or_loss = std::numeric_limits<double>::quiet_NaN();
  report.table[1].n_test = 0;
  RunRow run;
  run.sweep_value = 5.0;
  run.seed_index = 2;
  run.run_seed = 12345;
  run.applicable = true;
  run.unseen_accuracy = 0.5;
  run.seen_accuracy = 0.75;
  run.stage2_residual = std::numeric_limits<double>::quiet_NaN();
  report.runs.push_back(run);
  CurvePoint point;
  point.value = 5.0;
  point.runs = 1;
  point.mean_unseen = 0.5;
  point.std_unseen = 0.0;
  report.curve.push_back(point);
  report.has_distance = true;
  report.distance.spearman_min = -0.5;
  report.distance.min_defined = true;
  report.distance.spearman_mean = std::numeric_limits<double>::quiet_NaN();
  report.distance.mean_defined = false;
  report.distance.n_unseen = 2;
  report.has_bound = true;
  report.bound.term_residual = 0.125;
  report.bound.term_generalization = 2.5;
  report.bound.rank = 2;
  report.bound.d_max = 2;
  report.bound.modes = 2;
  report.bound.width = 3;
  report.bound.seen_count = 2;
  report.has_excess = true;
  report.excess.average = 0.01;
  report.excess.average_se = 0.002;
  report.excess.per_domain = {0.01, 0.01, 0.01, 0.01};
  report.excess.per_domain_se = {0.001, 0.001, 0.001, 0.001};
  report.excess.head_recovery_error = 0.3;

  const std::string path = temp_path("zsda_report.txt");
  emit_report(report, path);
  const ExperimentReport back = load_report(path);
  CHECK(back.kind == report.kind);
  REQUIRE(back.table.size() == report.table.size());
  for (std::size_t i = 0; i < back.table.size(); ++i) {
    CHECK(back.table[i].flat == report.table[i].flat);
    CHECK(back.table[i].seen == report.table[i].seen);
    if (std::isnan(report.table[i].accuracy_or_loss))
      CHECK(std::isnan(back.table[i].accuracy_or_loss));
    else
      CHECK(back.table[i].accuracy_or_loss == report.table[i].accuracy_or_loss);
  }
  REQUIRE(back.runs.size() == 1);
  CHECK(back.runs[0].run_seed == 12345);
  CHECK(std::isnan(back.runs[0].stage2_residual));
  REQUIRE(back.curve.size() == 1);
  CHECK(back.curve[0].mean_unseen == 0.5);
  CHECK(back.has_distance);
  CHECK_FALSE(back.distance.mean_defined);
  CHECK(back.has_bound);
  CHECK(back.bound.term_generalization == 2.5);
  CHECK(back.has_excess);
  CHECK(back.excess.per_domain.size() == 4);
  std::remove(path.c_str());
}

TEST_CASE("empty report emits a valid header-only file") {
  ExperimentReport report;
  report.kind = "sweep_T";
  const std::string path = temp_path("zsda_empty_report.txt");
  emit_report(report, path);
  const ExperimentReport back = load_report(path);
  CHECK(back.kind == "sweep_T");
  CHECK(back.table.empty());
  CHECK(back.runs.empty());
  std::remove(path.c_str());
}

TEST_CASE("domain CSV column order is pinned") {
  DomainGrid grid({2, 2});
  const auto table = synthetic_table(grid, sample_mask(grid, 2, 5), {0.5, 0.25});
  const std::string path = temp_path("zsda_domains.csv");
  emit_domain_csv(path, table);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "flat_index,multi_index,seen,n_test,accuracy_or_loss,min_manhattan,mean_manhattan");
  std::string row;
  std::getline(in, row);
  CHECK(row.substr(0, 4) == "0,0-");
  std::remove(path.c_str());
}

TEST_CASE("grid table export has one row per mode-0 level and blank seen cells") {
  DomainGrid grid({5, 5});
  const ObservationMask mask = diagonal_mask(grid);
  std::vector<std::vector<DomainMetrics>> tables;
  for (int seed = 0; seed < 3; ++seed) {
    std::vector<double> unseen;
    for (int i = 0; i < 20; ++i) unseen.push_back(0.5 + 0.01 * seed + 0.001 * i);
    tables.push_back(synthetic_table(grid, mask, unseen));
  }
  const std::string path = temp_path("zsda_grid.csv");
  emit_grid_table(path, grid, tables);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6);  // header + 5 levels
  std::remove(path.c_str());
}

}  // TEST_SUITE

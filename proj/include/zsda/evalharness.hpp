#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "zsda/datagen.hpp"
#include "zsda/pipeline.hpp"

namespace zsda {

struct DomainMetrics {
  int flat = 0;
  MultiIndex index;
  bool seen = false;
  int n_test = 0;
  /// Top-1 accuracy for classification tasks, mean loss for regression;
  /// NaN when the domain has no test data.
  double accuracy_or_loss = std::numeric_limits<double>::quiet_NaN();
  double min_manhattan = 0.0;
  double mean_manhattan = 0.0;
};

/// Per-domain metrics on held-out data. Ties in the argmax go to the lowest
/// class index. Errors when a domain has test data but the model cannot
/// produce a head for it.
std::vector<DomainMetrics> evaluate(const TrainedModel& model, const DomainDataset& test);

/// Mean accuracy (or loss) over the rows with data, split by the seen flag.
double mean_metric(const std::vector<DomainMetrics>& table, bool seen);

struct ExcessRiskResult {
  std::vector<double> per_domain;     // indexed by flat domain
  std::vector<double> per_domain_se;
  double average = 0.0;
  double average_se = 0.0;
  /// Mean over seen domains of ||learned head - planted head||; NaN when the
  /// shapes do not line up.
  double head_recovery_error = std::numeric_limits<double>::quiet_NaN();
};

/// Monte-Carlo paired estimate of E[loss(model)] - E[loss(oracle)] per
/// domain on the supplied held-out draws, averaged over the full grid.
ExcessRiskResult excess_risk(const TrainedModel& model, const PlantedModel& oracle,
                             const DomainDataset& test);

struct DistanceAnalysis {
  double spearman_min = std::numeric_limits<double>::quiet_NaN();
  bool min_defined = false;
  double spearman_mean = std::numeric_limits<double>::quiet_NaN();
  bool mean_defined = false;
  int n_unseen = 0;
};

/// Spearman rank correlation between unseen-domain accuracy and the min /
/// mean Manhattan distance to the seen set. Degenerate (constant) columns
/// are reported as undefined, never as zero.
DistanceAnalysis distance_analysis(const std::vector<DomainMetrics>& table);

/// Spearman correlation with average ranks for ties; defined=false when a
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b, bool* defined);

struct BoundDiagnostic {
  // (L * D_X * W / T) * sum_{t in mask} sum_j |w_hat - completed|
  double term_residual = std::numeric_limits<double>::quiet_NaN();
  // L * D_X * W * q * sqrt((K d M^2 ln(8ed) + ln(q/delta)) / T)
  double term_generalization = std::numeric_limits<double>::quiet_NaN();
  /// The representation-learning cost has no estimator; emitted symbolically.
  std::string unestimated = "Otilde(((T*C(W)+C(Phi))/(n*T))^(1/4))";
  double measured_average_excess = std::numeric_limits<double>::quiet_NaN();
  bool has_measurement = false;
  std::string constants_provenance = "user";
  BoundParams params;
  int rank = 0, d_max = 0, modes = 0, width = 0, seen_count = 0;
};

/// Computable pieces of the excess-risk bound for a two-stage run. Errors
/// for models without stage-2 residuals.
BoundDiagnostic bound_diagnostic(const BoundParams& params, const TrainedModel& run);

/// Fills L (from the loss kind), W (max head norm) and D_X (max ||phi(x)||
/// over the dataset) from the run itself; remaining constants keep their
/// defaults and the provenance string records the substitution.
BoundParams auto_bound_params(const TrainedModel& run, const DomainDataset& data, double delta);

struct RunRow {
  double sweep_value = 0.0;  // T or lambda
  int seed_index = 0;
  std::uint64_t run_seed = 0;
  bool applicable = true;  // false when the unseen set is empty
  double unseen_accuracy = std::numeric_limits<double>::quiet_NaN();
  double seen_accuracy = std::numeric_limits<double>::quiet_NaN();
  double stage2_residual = std::numeric_limits<double>::quiet_NaN();
};

struct CurvePoint {
  double value = 0.0;
  int runs = 0;
  bool applicable = true;
  double mean_unseen = std::numeric_limits<double>::quiet_NaN();
  double std_unseen = std::numeric_limits<double>::quiet_NaN();
  double mean_seen = std::numeric_limits<double>::quiet_NaN();
  double std_seen = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::string kind;  // evaluation | sweep_T | sweep_lambda
  std::string config_echo;  // JSON text
  std::vector<DomainMetrics> table;
  std::vector<RunRow> runs;
  std::vector<CurvePoint> curve;
  bool has_distance = false;
  DistanceAnalysis distance;
  bool has_bound = false;
  BoundDiagnostic bound;
  bool has_excess = false;
  ExcessRiskResult excess;
  /// Wall time is tracked in memory but never written to the canonical
  /// report files, which must be bit-identical across reruns.
  double wall_time_sec = 0.0;
};

enum class TrainerKind {
  TwoStage,
  EndToEndFactorized,
  EndToEndAdditive,
  EndToEndDescriptor,
  EndToEndSharedOnly,
  PooledBaseline
};

struct SweepTrainer {
  TrainerKind kind = TrainerKind::TwoStage;
  ArchConfig arch;
  TrainConfig train;
  CompletionConfig completion;  // two-stage only
};

TrainedModel run_trainer(const SweepTrainer& trainer, const DomainDataset& train_ds,
                         const ObservationMask& mask, std::uint64_t run_seed);

/// For each T and seed: draw a uniform mask, train, evaluate. The T = D
/// point has no unseen domains and is reported as not-applicable.
ExperimentReport sweep_T(const DomainDataset& train_ds, const DomainDataset& test_ds,
                         const std::vector<int>& t_values, int seeds,
                         const SweepTrainer& trainer, std::uint64_t master_seed,
                         int threads = 1);

/// Fixed mask, lambda varying over the list (default: the sensitivity-study
/// list 0.005 ... 1).
ExperimentReport sweep_lambda(const DomainDataset& train_ds, const DomainDataset& test_ds,
                              const ObservationMask& mask, const std::vector<double>& lambdas,
                              int seeds, const SweepTrainer& trainer, std::uint64_t master_seed,
                              int threads = 1);

std::vector<double> default_lambda_values();

// --- report emission -------------------------------------------------------

/// Header line then section-tagged lines; loads back losslessly except for
/// wall times, which are deliberately not written.
void emit_report(const ExperimentReport& report, const std::string& path);
ExperimentReport load_report(const std::string& path);

/// Columns: flat_index,multi_index,seen,n_test,accuracy_or_loss,
/// min_manhattan,mean_manhattan. The multi index is dash-joined.
void emit_domain_csv(const std::string& path, const std::vector<DomainMetrics>& table);

/// iteration,loss[,holdout_loss] rows.
void emit_training_curve_csv(const std::string& path, const TrainedModel& model);

/// Grid-shaped accuracy table: rows are mode-0 levels, columns mode-1
/// levels, each cell "mean(std)" across the per-seed tables; seen cells are
/// left blank.
void emit_grid_table(const std::string& path, const DomainGrid& grid,
                     const std::vector<std::vector<DomainMetrics>>& per_seed_tables);

/// Runs fn(0..count-1) on up to `threads` workers; results are produced by
/// index so scheduling cannot change any output.
void parallel_runs(int count, int threads, const std::function<void(int)>& fn);

}  // namespace zsda

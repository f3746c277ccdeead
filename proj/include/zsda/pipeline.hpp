#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "zsda/completion.hpp"
#include "zsda/datagen.hpp"
#include "zsda/model.hpp"

namespace zsda {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int max_iters = 2000;
  int stop_window = 50;        // trailing iterations examined by the stop rule
  double stop_threshold = 0.05;
  double lambda = 0.05;        // mean-attraction regularizer weight
  bool round_robin = false;    // cycle domains instead of uniform pair sampling
  std::uint64_t seed = 0;

  void validate() const;
};

/// Architecture of the learnable predictor; the representation is
/// [input, hidden..., rep_dim] with one activation for all hidden layers.
struct ArchConfig {
  std::vector<int> hidden = {64};
  Activation activation = Activation::ReLU;
  int rep_dim = 16;
  int rank = 2;                  // factorized bank rank
  double head_init_scale = 0.1;  // materialized-head scale at init
  bool identity_rep = false;     // phi = identity (requires rep_dim == input_dim)

  RepresentationNet make_net(int input_dim, std::uint64_t seed) const;
};

struct TrainedModel {
  Model model;
  LossSpec loss;
  ObservationMask mask;
  std::vector<double> curve;  // per-iteration training loss
  std::vector<std::pair<int, double>> holdout_curve;
  bool early_stopped = false;
  int iterations_run = 0;
  double wall_time_sec = 0.0;
  std::vector<std::string> warnings;
  std::string config_echo;  // JSON text

  // two-stage bookkeeping
  bool is_two_stage = false;
  double stage2_residual_l1 = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd stage1_heads;  // T x q, rows aligned with mask order
  bool completion_fully_identified = true;
  bool completion_converged = true;
  double completion_objective_l2 = std::numeric_limits<double>::quiet_NaN();
};

/// One optimizer step on the flat parameter vector; exposed so the update
/// rule can be checked against the hand-derived form.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long step = 0;
};
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

/// Stage 1 of the two-stage procedure: joint minimization over the shared
/// representation and one free head per seen domain.
TrainedModel train_erm(const DomainDataset& ds, const ObservationMask& mask,
                       const ArchConfig& arch, const TrainConfig& cfg,
                       const DomainDataset* holdout = nullptr);

/// ERM with free heads, then rank-K completion of the seen head rows, then
/// reassembly as a factorized bank covering every domain.
TrainedModel two_stage(const DomainDataset& ds, const ObservationMask& mask,
                       const ArchConfig& arch, const TrainConfig& cfg,
                       const CompletionConfig& completion_cfg,
                       const DomainDataset* holdout = nullptr);

/// Direct optimization of a bank that generalizes across domains
/// (factorized, additive, shared-only, or descriptor). The regularizer
/// applies to the additive and factorized variants only.
TrainedModel train_end_to_end(const DomainDataset& ds, const ObservationMask& mask,
                              const ArchConfig& arch, BankVariant variant,
                              const TrainConfig& cfg, const DomainDataset* holdout = nullptr);

/// Shared head trained on data pooled across the seen domains.
TrainedModel train_pooled_baseline(const DomainDataset& ds, const ObservationMask& mask,
                                   const ArchConfig& arch, const TrainConfig& cfg,
                                   const DomainDataset* holdout = nullptr);

}  // namespace zsda

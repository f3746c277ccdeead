#include "zsda/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "zsda/rng.hpp"

namespace zsda {

using nlohmann::json;

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw DomainError("TrainConfig: learning rate must be > 0");
  if (batch_size < 1) throw DomainError("TrainConfig: batch size must be >= 1");
  if (max_iters < 0) throw DomainError("TrainConfig: max iterations must be >= 0");
  if (stop_window < 1) throw DomainError("TrainConfig: stop window must be >= 1");
  if (lambda < 0) throw DomainError("TrainConfig: lambda must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || adam_eps <= 0)
    throw DomainError("TrainConfig: invalid optimizer constants");
}

RepresentationNet ArchConfig::make_net(int input_dim, std::uint64_t seed) const {
  if (identity_rep) {
    if (!hidden.empty()) throw ShapeError("ArchConfig: identity representation takes no hidden layers");
    return RepresentationNet::make({input_dim}, {});
  }
  std::vector<int> widths;
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(rep_dim);
  std::vector<Activation> acts(widths.size() >= 2 ? widths.size() - 2 : 0, activation);
  RepresentationNet net = RepresentationNet::make(widths, acts);

  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < net.layer_count(); ++l) {
    auto& w = net.weights[static_cast<std::size_t>(l)];
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gauss(rng) * scale;
  }
  return net;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (state.step == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  params.array() -=
      lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + eps);
}

namespace {

struct PairSampler {
  // (flat domain, sample index) pairs over the seen domains
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> domains;
  const DomainDataset* ds = nullptr;
  bool round_robin = false;
  std::size_t cursor = 0;

  std::vector<BatchItem> draw(int count, std::mt19937_64& rng) {
    std::vector<BatchItem> batch;
    batch.reserve(static_cast<std::size_t>(count));
    if (round_robin) {
      for (int i = 0; i < count; ++i) {
        const int t = domains[cursor % domains.size()];
        ++cursor;
        const auto& list = ds->samples[static_cast<std::size_t>(t)];
        std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
        batch.push_back(BatchItem{t, &list[pick(rng)]});
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
      for (int i = 0; i < count; ++i) {
        const auto& [t, j] = pairs[pick(rng)];
        batch.push_back(
            BatchItem{t, &ds->samples[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)]});
      }
    }
    return batch;
  }
};

LossSpec loss_for_dataset(const DomainDataset& ds) {
  if (ds.classes == 1) return LossSpec{LossKind::Squared, 1};
  if (ds.classes == 2) return LossSpec{LossKind::Logistic, 1};
  return LossSpec{LossKind::SoftmaxCrossEntropy, ds.classes};
}

json arch_echo(const ArchConfig& arch) {
  json a;
  a["hidden"] = arch.hidden;
  a["activation"] = arch.activation == Activation::ReLU   ? "relu"
                    : arch.activation == Activation::Tanh ? "tanh"
                                                          : "identity";
  a["rep_dim"] = arch.rep_dim;
  a["rank"] = arch.rank;
  a["head_init_scale"] = arch.head_init_scale;
  a["identity_rep"] = arch.identity_rep;
  return a;
}

json train_echo(const TrainConfig& cfg) {
  json t;
  t["optimizer"] = cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  t["learning_rate"] = cfg.learning_rate;
  t["batch_size"] = cfg.batch_size;
  t["max_iters"] = cfg.max_iters;
  t["stop_window"] = cfg.stop_window;
  t["stop_threshold"] = cfg.stop_threshold;
  t["lambda"] = cfg.lambda;
  t["round_robin"] = cfg.round_robin;
  t["seed"] = cfg.seed;
  return t;
}

// Shared optimization loop: batches over the seen pairs, one optimizer step
// per iteration, trailing-window early stop on the recorded training loss.
TrainedModel run_training(Model model, const DomainDataset& ds, const ObservationMask& mask,
                          const LossSpec& spec, const TrainConfig& cfg, double lambda,
                          const DomainDataset* holdout, const std::string& mode_tag,
                          const json& extra_echo) {
  cfg.validate();
  mask.validate();
  ds.validate();

  TrainedModel out;
  out.loss = spec;
  out.mask = mask;

  PairSampler sampler;
  sampler.ds = &ds;
  sampler.round_robin = cfg.round_robin;
  sampler.domains = mask.seen;
  for (int t : mask.seen) {
    const auto& list = ds.samples[static_cast<std::size_t>(t)];
    if (list.empty()) {
      std::ostringstream os;
      os << "train: masked domain " << t << " has no data";
      throw DataError(os.str());
    }
    for (int j = 0; j < static_cast<int>(list.size()); ++j) sampler.pairs.emplace_back(t, j);
  }
  int unmasked_with_data = 0;
  for (int t = 0; t < ds.grid.domain_count(); ++t)
    if (!mask.contains(t) && !ds.samples[static_cast<std::size_t>(t)].empty()) ++unmasked_with_data;
  if (unmasked_with_data > 0) {
    std::ostringstream os;
    os << "ignoring data in " << unmasked_with_data << " domains outside the training mask";
    out.warnings.push_back(os.str());
  }

  // Fixed subsample of held-out points, scored every few iterations for
  // analysis only; the stop rule never sees it.
  std::vector<BatchItem> holdout_items;
  if (holdout != nullptr) {
    auto hrng = make_rng(derive_seed(cfg.seed, 11));
    for (int t = 0; t < holdout->grid.domain_count(); ++t) {
      const auto& list = holdout->samples[static_cast<std::size_t>(t)];
      for (const auto& s : list) holdout_items.push_back(BatchItem{t, &s});
    }
    if (holdout_items.size() > 512) {
      std::shuffle(holdout_items.begin(), holdout_items.end(), hrng);
      holdout_items.resize(512);
    }
  }

  json echo;
  echo["mode"] = mode_tag;
  echo["train"] = train_echo(cfg);
  if (!extra_echo.is_null()) echo.update(extra_echo);
  out.config_echo = echo.dump();

  const auto t0 = std::chrono::steady_clock::now();
  Eigen::VectorXd params = pack_params(model);
  AdamState adam;
  auto rng = make_rng(derive_seed(cfg.seed, 7));
  ModelGrads grads = zero_grads(model);

  double window_sum = 0.0;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const std::vector<BatchItem> batch = sampler.draw(cfg.batch_size, rng);
    visit_params(grads, [](double* b, std::size_t n) { std::fill(b, b + n, 0.0); });
    double loss = 0.0;
    try {
      loss = loss_and_grads(model, batch, spec, lambda, &grads);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << e.what() << " (iteration " << iter << ")";
      throw NumericError(os.str());
    }
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "training diverged: non-finite loss at iteration " << iter;
      throw NumericError(os.str());
    }

    const Eigen::VectorXd g = pack_params(grads);
    if (cfg.optimizer == OptimizerKind::Adam)
      adam_step(params, g, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    else
      params -= cfg.learning_rate * g;
    unpack_params(params, model);

    out.curve.push_back(loss);
    window_sum += loss;
    if (static_cast<int>(out.curve.size()) > cfg.stop_window)
      window_sum -= out.curve[out.curve.size() - 1 - static_cast<std::size_t>(cfg.stop_window)];

    if (holdout != nullptr && !holdout_items.empty() && (iter % 10 == 0 || iter + 1 == cfg.max_iters))
      out.holdout_curve.emplace_back(iter, loss_and_grads(model, holdout_items, spec, 0.0, nullptr));

    if (static_cast<int>(out.curve.size()) >= cfg.stop_window &&
        window_sum / cfg.stop_window < cfg.stop_threshold) {
      out.early_stopped = true;
      break;
    }
  }
  out.iterations_run = static_cast<int>(out.curve.size());
  out.model = std::move(model);
  out.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

HeadBank init_bank(BankVariant variant, const DomainGrid& grid, int rep_dim, int classes,
                   const ObservationMask& mask, const ArchConfig& arch, std::uint64_t seed) {
  switch (variant) {
    case BankVariant::Free:
      return HeadBank::make_free(grid, rep_dim, classes, mask.seen);
    case BankVariant::SharedOnly:
      return HeadBank::make_shared(grid, rep_dim, classes);
    case BankVariant::Additive:
      return HeadBank::make_additive(grid, rep_dim, classes);
    case BankVariant::Factorized: {
      HeadBank bank = HeadBank::make_factorized(grid, rep_dim, classes, arch.rank);
      auto& f = std::get<FactorizedHeads>(bank.payload).factors;
      // Per-entry scale chosen so materialized heads start near
      // head_init_scale: K products of M factors each.
      const double entry = std::pow(
          arch.head_init_scale / std::sqrt(static_cast<double>(arch.rank)),
          1.0 / static_cast<double>(grid.mode_count()));
      auto rng = make_rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int k = 0; k < f.rank; ++k)
        for (int m = 0; m < grid.mode_count(); ++m)
          for (Eigen::Index a = 0; a < f.factor(k, m).rows(); ++a)
            for (Eigen::Index b = 0; b < f.factor(k, m).cols(); ++b)
              f.factor(k, m)(a, b) = gauss(rng) * entry;
      return bank;
    }
    case BankVariant::Descriptor: {
      HeadBank bank = HeadBank::make_descriptor(grid, rep_dim, classes);
      auto& d = std::get<DescriptorHeads>(bank.payload);
      auto rng = make_rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double scale = 1.0 / std::sqrt(static_cast<double>(d.coeff.cols()));
      for (Eigen::Index i = 0; i < d.coeff.rows(); ++i)
        for (Eigen::Index j = 0; j < d.coeff.cols(); ++j) d.coeff(i, j) = gauss(rng) * scale;
      // Basis heads start at zero, so initial logits are zero like the
      // other variants; the coefficients break the symmetry.
      return bank;
    }
  }
  throw DomainError("unknown bank variant");
}

std::string variant_name(BankVariant v) {
  switch (v) {
    case BankVariant::Free:
      return "free";
    case BankVariant::Factorized:
      return "factorized";
    case BankVariant::Additive:
      return "additive";
    case BankVariant::SharedOnly:
      return "shared_only";
    case BankVariant::Descriptor:
      return "descriptor";
  }
  return "?";
}

}  // namespace

TrainedModel train_erm(const DomainDataset& ds, const ObservationMask& mask,
                       const ArchConfig& arch, const TrainConfig& cfg,
                       const DomainDataset* holdout) {
  const LossSpec spec = loss_for_dataset(ds);
  Model model{arch.make_net(ds.input_dim, derive_seed(cfg.seed, 3)),
              init_bank(BankVariant::Free, ds.grid, arch.identity_rep ? ds.input_dim : arch.rep_dim,
                        spec.classes, mask, arch, derive_seed(cfg.seed, 4))};
  json extra;
  extra["arch"] = arch_echo(arch);
  extra["variant"] = "free";
  // Free heads carry no listed classifiers, so lambda is inert here.
  return run_training(std::move(model), ds, mask, spec, cfg, cfg.lambda, holdout, "erm", extra);
}

TrainedModel two_stage(const DomainDataset& ds, const ObservationMask& mask,
                       const ArchConfig& arch, const TrainConfig& cfg,
                       const CompletionConfig& completion_cfg, const DomainDataset* holdout) {
  TrainedModel stage1 = train_erm(ds, mask, arch, cfg, holdout);

  const auto& free = std::get<FreeHeads>(stage1.model.bank.payload);
  const int q = stage1.model.bank.head_width();
  Eigen::MatrixXd observed(mask.count(), q);
  for (int i = 0; i < mask.count(); ++i) {
    const auto& head = free.heads[static_cast<std::size_t>(i)];
    observed.row(i) = Eigen::Map<const Eigen::VectorXd>(head.data(), q).transpose();
  }

  // The learned heads go into completion as-is; they are the noisy
  // observations of the underlying tensor.
  const CompletionResult completed = complete(observed, mask, completion_cfg);

  TrainedModel out = std::move(stage1);
  out.is_two_stage = true;
  out.stage1_heads = std::move(observed);
  out.stage2_residual_l1 = completed.objective_l1;
  out.completion_fully_identified = completed.fully_identified;
  out.completion_converged = completed.converged;
  out.completion_objective_l2 = completed.objective_l2;
  out.model.bank.payload = FactorizedHeads{completed.factors};

  json echo = json::parse(out.config_echo);
  echo["mode"] = "two_stage";
  echo["completion"] = {{"rank", completion_cfg.rank},
                        {"max_sweeps", completion_cfg.max_sweeps},
                        {"tol", completion_cfg.tol},
                        {"restarts", completion_cfg.restarts},
                        {"ridge", completion_cfg.ridge},
                        {"seed", completion_cfg.seed}};
  out.config_echo = echo.dump();
  return out;
}

TrainedModel train_end_to_end(const DomainDataset& ds, const ObservationMask& mask,
                              const ArchConfig& arch, BankVariant variant,
                              const TrainConfig& cfg, const DomainDataset* holdout) {
  if (variant == BankVariant::Free)
    throw UnsupportedError("train_end_to_end: free heads cannot predict unseen domains; use train_erm");
  const LossSpec spec = loss_for_dataset(ds);
  Model model{arch.make_net(ds.input_dim, derive_seed(cfg.seed, 3)),
              init_bank(variant, ds.grid, arch.identity_rep ? ds.input_dim : arch.rep_dim,
                        spec.classes, mask, arch, derive_seed(cfg.seed, 4))};
  // The mean-attraction regularizer applies to the low-rank variants only.
  const bool regularized =
      variant == BankVariant::Additive || variant == BankVariant::Factorized;
  json extra;
  extra["arch"] = arch_echo(arch);
  extra["variant"] = variant_name(variant);
  return run_training(std::move(model), ds, mask, spec, cfg, regularized ? cfg.lambda : 0.0,
                      holdout, "end_to_end", extra);
}

TrainedModel train_pooled_baseline(const DomainDataset& ds, const ObservationMask& mask,
                                   const ArchConfig& arch, const TrainConfig& cfg,
                                   const DomainDataset* holdout) {
  // Uniform sampling over (seen domain, sample) pairs is exactly pooled
  // training for the shared head.
  TrainConfig pooled = cfg;
  pooled.round_robin = false;
  TrainedModel out = train_end_to_end(ds, mask, arch, BankVariant::SharedOnly, pooled, holdout);
  json echo = json::parse(out.config_echo);
  echo["mode"] = "pooled_baseline";
  out.config_echo = echo.dump();
  return out;
}

}  // namespace zsda

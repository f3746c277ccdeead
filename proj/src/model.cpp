#include "zsda/model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace zsda {

namespace {

Eigen::VectorXd apply_activation(Activation act, const Eigen::VectorXd& z) {
  switch (act) {
    case Activation::ReLU:
      return z.cwiseMax(0.0);
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Identity:
      return z;
  }
  throw DomainError("unknown activation");
}

Eigen::VectorXd activation_deriv(Activation act, const Eigen::VectorXd& z) {
  switch (act) {
    case Activation::ReLU:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - z.array().tanh().square()).matrix();
    case Activation::Identity:
      return Eigen::VectorXd::Ones(z.size());
  }
  throw DomainError("unknown activation");
}

Eigen::VectorXd flatten_head(const Eigen::MatrixXd& head) {
  return Eigen::Map<const Eigen::VectorXd>(head.data(), head.size());
}

Eigen::MatrixXd unflatten_head(const Eigen::VectorXd& w, int rep_dim, int classes) {
  return Eigen::Map<const Eigen::MatrixXd>(w.data(), rep_dim, classes);
}

}  // namespace

// --- RepresentationNet ----------------------------------------------------

RepresentationNet RepresentationNet::make(const std::vector<int>& widths,
                                          const std::vector<Activation>& hidden_acts) {
  if (widths.empty()) throw ShapeError("RepresentationNet: widths must be non-empty");
  for (int w : widths)
    if (w < 1) throw ShapeError("RepresentationNet: widths must be positive");
  RepresentationNet net;
  net.widths = widths;
  net.hidden_acts = hidden_acts;
  const int layers = net.layer_count();
  const int hidden = layers > 0 ? layers - 1 : 0;
  if (static_cast<int>(hidden_acts.size()) != hidden)
    throw ShapeError("RepresentationNet: one activation per hidden layer required");
  for (int l = 0; l < layers; ++l) {
    net.weights.emplace_back(Eigen::MatrixXd::Zero(widths[static_cast<std::size_t>(l + 1)],
                                                   widths[static_cast<std::size_t>(l)]));
    net.biases.emplace_back(Eigen::VectorXd::Zero(widths[static_cast<std::size_t>(l + 1)]));
  }
  return net;
}

void RepresentationNet::validate() const {
  if (widths.empty()) throw ShapeError("RepresentationNet: widths must be non-empty");
  const int layers = layer_count();
  if (static_cast<int>(weights.size()) != layers || static_cast<int>(biases.size()) != layers)
    throw ShapeError("RepresentationNet: layer count mismatch");
  for (int l = 0; l < layers; ++l) {
    const auto& w = weights[static_cast<std::size_t>(l)];
    const auto& b = biases[static_cast<std::size_t>(l)];
    if (w.rows() != widths[static_cast<std::size_t>(l + 1)] ||
        w.cols() != widths[static_cast<std::size_t>(l)] || b.size() != w.rows())
      throw ShapeError("RepresentationNet: weight shape chain broken");
    if (!w.allFinite() || !b.allFinite())
      throw DataError("RepresentationNet: non-finite parameter");
  }
}

Eigen::VectorXd RepresentationNet::forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw ShapeError("RepresentationNet: input size mismatch");
  Eigen::VectorXd a = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::VectorXd z = weights[static_cast<std::size_t>(l)] * a + biases[static_cast<std::size_t>(l)];
    a = (l < layer_count() - 1) ? apply_activation(hidden_acts[static_cast<std::size_t>(l)], z)
                                : std::move(z);
  }
  return a;
}

// --- HeadBank --------------------------------------------------------------

BankVariant HeadBank::variant() const {
  return static_cast<BankVariant>(payload.index());
}

bool HeadBank::covers_all_domains() const {
  return variant() != BankVariant::Free;
}

Eigen::VectorXd domain_descriptor(const DomainGrid& grid, const MultiIndex& idx) {
  int total = 0;
  for (int m = 0; m < grid.mode_count(); ++m) total += grid.dim(m);
  Eigen::VectorXd desc = Eigen::VectorXd::Zero(total);
  int offset = 0;
  for (int m = 0; m < grid.mode_count(); ++m) {
    desc(offset + idx[static_cast<std::size_t>(m)]) = 1.0;
    offset += grid.dim(m);
  }
  return desc;
}

int descriptor_basis_count(const DomainGrid& grid) {
  int total = 1;
  for (int m = 0; m < grid.mode_count(); ++m) total += grid.dim(m);
  return total;
}

Eigen::MatrixXd HeadBank::head_for(const MultiIndex& idx) const {
  const int t = grid.flat_index(idx);
  return std::visit(
      [&](const auto& payload_) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(payload_)>;
        if constexpr (std::is_same_v<T, FreeHeads>) {
          auto it = std::lower_bound(payload_.domains.begin(), payload_.domains.end(), t);
          if (it == payload_.domains.end() || *it != t) {
            std::ostringstream os;
            os << "no head for unseen domain " << t;
            throw BoundsError(os.str());
          }
          return payload_.heads[static_cast<std::size_t>(it - payload_.domains.begin())];
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          return unflatten_head(cp_reconstruct_head(payload_.factors, idx), rep_dim, classes);
        } else if constexpr (std::is_same_v<T, AdditiveHeads>) {
          Eigen::VectorXd w = payload_.shared;
          for (int m = 0; m < grid.mode_count(); ++m)
            w += payload_.per_mode[static_cast<std::size_t>(m)]
                     .row(idx[static_cast<std::size_t>(m)])
                     .transpose();
          return unflatten_head(w, rep_dim, classes);
        } else if constexpr (std::is_same_v<T, SharedHead>) {
          return payload_.head;
        } else {
          Eigen::VectorXd pre = payload_.coeff * domain_descriptor(grid, idx);
          Eigen::VectorXd c = pre.cwiseMax(0.0);
          return unflatten_head(payload_.basis.transpose() * c, rep_dim, classes);
        }
      },
      payload);
}

void HeadBank::validate() const {
  if (rep_dim < 1 || classes < 1) throw ShapeError("HeadBank: rep_dim and classes must be >= 1");
  const int q = head_width();
  std::visit(
      [&](const auto& payload_) {
        using T = std::decay_t<decltype(payload_)>;
        if constexpr (std::is_same_v<T, FreeHeads>) {
          if (payload_.domains.size() != payload_.heads.size())
            throw ShapeError("FreeHeads: domain/head count mismatch");
          if (!std::is_sorted(payload_.domains.begin(), payload_.domains.end()))
            throw ShapeError("FreeHeads: domains must be sorted");
          for (const auto& h : payload_.heads)
            if (h.rows() != rep_dim || h.cols() != classes)
              throw ShapeError("FreeHeads: head shape mismatch");
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          payload_.factors.validate();
          if (payload_.factors.width != q || !(payload_.factors.grid == grid))
            throw ShapeError("FactorizedHeads: factor shape mismatch");
        } else if constexpr (std::is_same_v<T, AdditiveHeads>) {
          if (payload_.shared.size() != q) throw ShapeError("AdditiveHeads: shared width mismatch");
          if (static_cast<int>(payload_.per_mode.size()) != grid.mode_count())
            throw ShapeError("AdditiveHeads: mode count mismatch");
          for (int m = 0; m < grid.mode_count(); ++m) {
            const auto& b = payload_.per_mode[static_cast<std::size_t>(m)];
            if (b.rows() != grid.dim(m) || b.cols() != q)
              throw ShapeError("AdditiveHeads: per-mode shape mismatch");
          }
        } else if constexpr (std::is_same_v<T, SharedHead>) {
          if (payload_.head.rows() != rep_dim || payload_.head.cols() != classes)
            throw ShapeError("SharedHead: shape mismatch");
        } else {
          int desc_len = 0;
          for (int m = 0; m < grid.mode_count(); ++m) desc_len += grid.dim(m);
          if (payload_.basis.rows() != descriptor_basis_count(grid) || payload_.basis.cols() != q)
            throw ShapeError("DescriptorHeads: basis shape mismatch");
          if (payload_.coeff.rows() != payload_.basis.rows() || payload_.coeff.cols() != desc_len)
            throw ShapeError("DescriptorHeads: coeff shape mismatch");
        }
      },
      payload);
}

HeadBank HeadBank::make_free(const DomainGrid& grid, int rep_dim, int classes,
                             const std::vector<int>& seen) {
  HeadBank bank{grid, rep_dim, classes, FreeHeads{}};
  auto& free = std::get<FreeHeads>(bank.payload);
  free.domains = seen;
  std::sort(free.domains.begin(), free.domains.end());
  for (std::size_t i = 0; i < free.domains.size(); ++i)
    free.heads.emplace_back(Eigen::MatrixXd::Zero(rep_dim, classes));
  return bank;
}

HeadBank HeadBank::make_factorized(const DomainGrid& grid, int rep_dim, int classes, int rank) {
  HeadBank bank{grid, rep_dim, classes, FactorizedHeads{}};
  std::get<FactorizedHeads>(bank.payload).factors =
      CPFactors::zeros(rank, grid, rep_dim * classes);
  return bank;
}

HeadBank HeadBank::make_additive(const DomainGrid& grid, int rep_dim, int classes) {
  HeadBank bank{grid, rep_dim, classes, AdditiveHeads{}};
  auto& add = std::get<AdditiveHeads>(bank.payload);
  const int q = rep_dim * classes;
  add.shared = Eigen::VectorXd::Zero(q);
  for (int m = 0; m < grid.mode_count(); ++m)
    add.per_mode.emplace_back(Eigen::MatrixXd::Zero(grid.dim(m), q));
  return bank;
}

HeadBank HeadBank::make_shared(const DomainGrid& grid, int rep_dim, int classes) {
  HeadBank bank{grid, rep_dim, classes, SharedHead{}};
  std::get<SharedHead>(bank.payload).head = Eigen::MatrixXd::Zero(rep_dim, classes);
  return bank;
}

HeadBank HeadBank::make_descriptor(const DomainGrid& grid, int rep_dim, int classes) {
  HeadBank bank{grid, rep_dim, classes, DescriptorHeads{}};
  auto& d = std::get<DescriptorHeads>(bank.payload);
  int desc_len = 0;
  for (int m = 0; m < grid.mode_count(); ++m) desc_len += grid.dim(m);
  d.basis = Eigen::MatrixXd::Zero(descriptor_basis_count(grid), rep_dim * classes);
  d.coeff = Eigen::MatrixXd::Zero(descriptor_basis_count(grid), desc_len);
  return bank;
}

// --- Losses ----------------------------------------------------------------

void LossSpec::validate() const {
  if (kind == LossKind::SoftmaxCrossEntropy) {
    if (classes < 2) throw ShapeError("LossSpec: softmax requires classes >= 2");
  } else if (classes != 1) {
    throw ShapeError("LossSpec: squared/logistic require classes == 1");
  }
}

namespace {

void check_label(const LossSpec& spec, double y) {
  if (!std::isfinite(y)) throw DataError("label is not finite");
  if (spec.kind == LossKind::Logistic) {
    if (y != 0.0 && y != 1.0) throw DataError("logistic label must be 0 or 1");
  } else if (spec.kind == LossKind::SoftmaxCrossEntropy) {
    if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(spec.classes))
      throw DataError("softmax label must be a class index in [0, C)");
  }
}

}  // namespace

double loss_value(const LossSpec& spec, const Eigen::VectorXd& logits, double label) {
  if (logits.size() != spec.classes) throw ShapeError("loss_value: logit width mismatch");
  check_label(spec, label);
  switch (spec.kind) {
    case LossKind::Squared: {
      const double diff = logits(0) - label;
      return diff * diff;
    }
    case LossKind::Logistic: {
      const double z = logits(0);
      // softplus(z) - y z, computed stably
      return std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));
    }
    case LossKind::SoftmaxCrossEntropy: {
      const double zmax = logits.maxCoeff();
      const double lse = zmax + std::log((logits.array() - zmax).exp().sum());
      return lse - logits(static_cast<int>(label));
    }
  }
  throw DomainError("unknown loss kind");
}

Eigen::VectorXd loss_grad(const LossSpec& spec, const Eigen::VectorXd& logits, double label) {
  if (logits.size() != spec.classes) throw ShapeError("loss_grad: logit width mismatch");
  check_label(spec, label);
  switch (spec.kind) {
    case LossKind::Squared:
      return Eigen::VectorXd::Constant(1, 2.0 * (logits(0) - label));
    case LossKind::Logistic: {
      const double z = logits(0);
      const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
      return Eigen::VectorXd::Constant(1, sig - label);
    }
    case LossKind::SoftmaxCrossEntropy: {
      const double zmax = logits.maxCoeff();
      Eigen::VectorXd p = (logits.array() - zmax).exp().matrix();
      p /= p.sum();
      p(static_cast<int>(label)) -= 1.0;
      return p;
    }
  }
  throw DomainError("unknown loss kind");
}

// --- Model bundle -----------------------------------------------------------

ModelGrads zero_grads(const Model& model) {
  ModelGrads grads = model;
  visit_params(grads, [](double* block, std::size_t n) {
    std::fill(block, block + n, 0.0);
  });
  return grads;
}

std::size_t param_count(const Model& model) {
  std::size_t total = 0;
  visit_params(model, [&](const double*, std::size_t n) { total += n; });
  return total;
}

Eigen::VectorXd pack_params(const Model& model) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(param_count(model)));
  Eigen::Index pos = 0;
  visit_params(model, [&](const double* block, std::size_t n) {
    std::copy(block, block + n, flat.data() + pos);
    pos += static_cast<Eigen::Index>(n);
  });
  return flat;
}

void unpack_params(const Eigen::VectorXd& flat, Model& model) {
  if (static_cast<std::size_t>(flat.size()) != param_count(model))
    throw ShapeError("unpack_params: parameter count mismatch");
  Eigen::Index pos = 0;
  visit_params(model, [&](double* block, std::size_t n) {
    std::copy(flat.data() + pos, flat.data() + pos + static_cast<Eigen::Index>(n), block);
    pos += static_cast<Eigen::Index>(n);
  });
}

Eigen::VectorXd forward(const Model& model, const MultiIndex& domain, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd head = model.bank.head_for(domain);
  return head.transpose() * model.net.forward(x);
}

namespace {

struct ForwardCache {
  std::vector<Eigen::VectorXd> activations;  // a_0 .. a_L
  std::vector<Eigen::VectorXd> preacts;      // z_0 .. z_{L-1}
};

Eigen::VectorXd net_forward_cached(const RepresentationNet& net, const Eigen::VectorXd& x,
                                   ForwardCache& cache) {
  cache.activations.clear();
  cache.preacts.clear();
  cache.activations.push_back(x);
  for (int l = 0; l < net.layer_count(); ++l) {
    Eigen::VectorXd z = net.weights[static_cast<std::size_t>(l)] * cache.activations.back() +
                        net.biases[static_cast<std::size_t>(l)];
    cache.preacts.push_back(z);
    cache.activations.push_back(
        l < net.layer_count() - 1
            ? apply_activation(net.hidden_acts[static_cast<std::size_t>(l)], z)
            : z);
  }
  return cache.activations.back();
}

void net_backward(const RepresentationNet& net, const ForwardCache& cache,
                  const Eigen::VectorXd& grad_out, RepresentationNet& grads) {
  Eigen::VectorXd grad_a = grad_out;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    Eigen::VectorXd dz =
        (l == net.layer_count() - 1)
            ? grad_a
            : (grad_a.array() *
               activation_deriv(net.hidden_acts[static_cast<std::size_t>(l)],
                                cache.preacts[static_cast<std::size_t>(l)])
                   .array())
                  .matrix();
    grads.weights[static_cast<std::size_t>(l)].noalias() +=
        dz * cache.activations[static_cast<std::size_t>(l)].transpose();
    grads.biases[static_cast<std::size_t>(l)] += dz;
    if (l > 0) grad_a.noalias() = net.weights[static_cast<std::size_t>(l)].transpose() * dz;
  }
}

// Route the accumulated d(loss)/d(head) for one domain into the bank's
// parameter gradients.
void bank_backward(const HeadBank& bank, const MultiIndex& idx, const Eigen::MatrixXd& g_head,
                   HeadBank& grads) {
  const Eigen::VectorXd gw = flatten_head(g_head);
  std::visit(
      [&](auto& grad_payload) {
        using T = std::decay_t<decltype(grad_payload)>;
        const auto& payload = std::get<T>(bank.payload);
        if constexpr (std::is_same_v<T, FreeHeads>) {
          const int t = bank.grid.flat_index(idx);
          auto it = std::lower_bound(payload.domains.begin(), payload.domains.end(), t);
          grad_payload.heads[static_cast<std::size_t>(it - payload.domains.begin())] += g_head;
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          const auto& f = payload.factors;
          for (int k = 0; k < f.rank; ++k) {
            for (int m = 0; m < f.grid.mode_count(); ++m) {
              Eigen::ArrayXd prod = gw.array();
              for (int mm = 0; mm < f.grid.mode_count(); ++mm) {
                if (mm == m) continue;
                prod *= f.factor(k, mm).row(idx[static_cast<std::size_t>(mm)]).transpose().array();
              }
              grad_payload.factors.factor(k, m).row(idx[static_cast<std::size_t>(m)]) +=
                  prod.matrix().transpose();
            }
          }
        } else if constexpr (std::is_same_v<T, AdditiveHeads>) {
          grad_payload.shared += gw;
          for (int m = 0; m < bank.grid.mode_count(); ++m)
            grad_payload.per_mode[static_cast<std::size_t>(m)]
                .row(idx[static_cast<std::size_t>(m)]) += gw.transpose();
        } else if constexpr (std::is_same_v<T, SharedHead>) {
          grad_payload.head += g_head;
        } else {
          const Eigen::VectorXd desc = domain_descriptor(bank.grid, idx);
          const Eigen::VectorXd pre = payload.coeff * desc;
          const Eigen::VectorXd c = pre.cwiseMax(0.0);
          grad_payload.basis.noalias() += c * gw.transpose();
          Eigen::VectorXd dc = payload.basis * gw;
          Eigen::VectorXd dpre =
              (dc.array() * (pre.array() > 0.0).cast<double>()).matrix();
          grad_payload.coeff.noalias() += dpre * desc.transpose();
        }
      },
      grads.payload);
}

}  // namespace

double regularizer(const HeadBank& bank, double lambda, HeadBank* grad_bank) {
  if (lambda < 0.0) throw DomainError("regularizer: lambda must be >= 0");
  std::vector<Eigen::VectorXd> vecs;
  std::visit(
      [&](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, AdditiveHeads>) {
          for (const auto& b : payload.per_mode)
            for (Eigen::Index r = 0; r < b.rows(); ++r) vecs.push_back(b.row(r).transpose());
          vecs.push_back(payload.shared);
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          for (const auto& modes : payload.factors.factors)
            for (const auto& f : modes)
              for (Eigen::Index r = 0; r < f.rows(); ++r) vecs.push_back(f.row(r).transpose());
        }
      },
      bank.payload);
  if (vecs.empty() || lambda == 0.0) return 0.0;

  const double n = static_cast<double>(vecs.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(vecs.front().size());
  for (const auto& v : vecs) mean += v;
  mean /= n;
  double value = 0.0;
  for (const auto& v : vecs) value += (v - mean).squaredNorm();
  value *= lambda / n;

  if (grad_bank != nullptr) {
    // d/dv_a = (2 lambda / n)(v_a - mean); the mean's own dependence cancels.
    const double scale = 2.0 * lambda / n;
    std::visit(
        [&](auto& grad_payload) {
          using T = std::decay_t<decltype(grad_payload)>;
          if constexpr (std::is_same_v<T, AdditiveHeads>) {
            const auto& payload = std::get<AdditiveHeads>(bank.payload);
            for (std::size_t m = 0; m < payload.per_mode.size(); ++m)
              for (Eigen::Index r = 0; r < payload.per_mode[m].rows(); ++r)
                grad_payload.per_mode[m].row(r) +=
                    scale * (payload.per_mode[m].row(r) - mean.transpose());
            grad_payload.shared += scale * (payload.shared - mean);
          } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
            const auto& payload = std::get<FactorizedHeads>(bank.payload);
            for (int k = 0; k < payload.factors.rank; ++k)
              for (int m = 0; m < payload.factors.grid.mode_count(); ++m)
                for (Eigen::Index r = 0; r < payload.factors.factor(k, m).rows(); ++r)
                  grad_payload.factors.factor(k, m).row(r) +=
                      scale * (payload.factors.factor(k, m).row(r) - mean.transpose());
          }
        },
        grad_bank->payload);
  }
  return value;
}

double loss_and_grads(const Model& model, const std::vector<BatchItem>& batch,
                      const LossSpec& spec, double lambda, ModelGrads* grads) {
  if (batch.empty()) throw DataError("loss_and_grads: empty batch");
  spec.validate();
  if (spec.classes != model.bank.classes)
    throw ShapeError("loss_and_grads: loss classes must match bank classes");

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;

  // Heads are reused across samples of the same domain and their gradients
  // accumulated per domain before being routed into the bank parameters.
  std::unordered_map<int, Eigen::MatrixXd> heads;
  std::unordered_map<int, Eigen::MatrixXd> head_grads;
  ForwardCache cache;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchItem& item = batch[i];
    const MultiIndex idx = model.bank.grid.multi_index(item.domain);
    auto found = heads.find(item.domain);
    if (found == heads.end())
      found = heads.emplace(item.domain, model.bank.head_for(idx)).first;
    const Eigen::MatrixXd& head = found->second;

    const Eigen::VectorXd phi = net_forward_cached(model.net, item.sample->x, cache);
    const Eigen::VectorXd logits = head.transpose() * phi;
    if (!logits.allFinite()) {
      std::ostringstream os;
      os << "loss_and_grads: non-finite forward value at batch sample " << i;
      throw NumericError(os.str());
    }
    total += loss_value(spec, logits, item.sample->y) * inv_batch;

    if (grads != nullptr) {
      const Eigen::VectorXd dz = loss_grad(spec, logits, item.sample->y) * inv_batch;
      auto slot = head_grads.find(item.domain);
      if (slot == head_grads.end())
        slot = head_grads
                   .emplace(item.domain,
                            Eigen::MatrixXd::Zero(head.rows(), head.cols()))
                   .first;
      slot->second.noalias() += phi * dz.transpose();
      net_backward(model.net, cache, head * dz, grads->net);
    }
  }

  if (grads != nullptr) {
    for (const auto& [domain, g_head] : head_grads)
      bank_backward(model.bank, model.bank.grid.multi_index(domain), g_head, grads->bank);
    total += regularizer(model.bank, lambda, &grads->bank);
  } else {
    total += regularizer(model.bank, lambda, nullptr);
  }
  return total;
}

std::vector<std::pair<int, double>> head_norms(const HeadBank& bank) {
  std::vector<std::pair<int, double>> norms;
  if (const auto* free = std::get_if<FreeHeads>(&bank.payload)) {
    for (std::size_t i = 0; i < free->domains.size(); ++i)
      norms.emplace_back(free->domains[i], free->heads[i].norm());
    return norms;
  }
  for (int t = 0; t < bank.grid.domain_count(); ++t)
    norms.emplace_back(t, bank.head_for(bank.grid.multi_index(t)).norm());
  return norms;
}

double representation_norm_bound(const RepresentationNet& net, const std::vector<Sample>& data) {
  if (data.empty()) throw DataError("representation_norm_bound: empty dataset");
  double best = 0.0;
  for (const auto& s : data) best = std::max(best, net.forward(s.x).norm());
  return best;
}

void BoundParams::validate() const {
  if (loss_bound <= 0 || loss_lipschitz <= 0 || head_norm_bound <= 0 || rep_norm_bound <= 0 ||
      strong_convexity <= 0)
    throw DomainError("BoundParams: constants must be positive");
  if (delta <= 0 || delta >= 1) throw DomainError("BoundParams: delta must be in (0,1)");
  if (diversity_nu <= 0 || diversity_nu > 1)
    throw DomainError("BoundParams: nu must be in (0,1]");
  if (diversity_eps < 0) throw DomainError("BoundParams: eps must be >= 0");
}

}  // namespace zsda

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <variant>
#include <vector>

#include "zsda/tensor.hpp"

namespace zsda {

enum class Activation { ReLU, Tanh, Identity };

/// One labeled observation. For classification the label is a class index
/// stored as a double; for regression it is the response value.
struct Sample {
  Eigen::VectorXd x;
  double y = 0.0;
};

/// Small fully connected feature map from R^r to R^p. Hidden layers carry
/// the configured activation, the output layer is linear. A single-entry
/// width list is the identity map (no parameters, r == p).
struct RepresentationNet {
  std::vector<int> widths;               // [r, h_1, ..., p]
  std::vector<Activation> hidden_acts;   // one per hidden layer
  std::vector<Eigen::MatrixXd> weights;  // out x in
  std::vector<Eigen::VectorXd> biases;

  static RepresentationNet make(const std::vector<int>& widths,
                                const std::vector<Activation>& hidden_acts);

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  void validate() const;
};

// --- Head bank variants ------------------------------------------------
//
// Heads are p x C matrices; the flattened form w = vec(H) (column-major)
// has width q = p*C and is the unit the rank constraint applies to.

/// Independent head per seen domain; no head exists elsewhere — that gap is
/// exactly what tensor completion fills.
struct FreeHeads {
  std::vector<int> domains;            // sorted flat indices
  std::vector<Eigen::MatrixXd> heads;  // p x C, aligned with domains
};

/// Heads materialized from a shared rank-K factor model (width q = p*C).
struct FactorizedHeads {
  CPFactors factors;
};

/// w_t = shared + sum_m per_mode[m].row(t_m); the ones-padded rank-(M+1)
/// special case.
struct AdditiveHeads {
  Eigen::VectorXd shared;                 // q
  std::vector<Eigen::MatrixXd> per_mode;  // d_m x q
};

/// One head for every domain (the domain-agnostic model).
struct SharedHead {
  Eigen::MatrixXd head;  // p x C
};

/// General predictor-generator baseline: a domain descriptor (concatenated
/// one-hot level encodings) is mapped through ReLU(coeff * descriptor) to
/// combination weights over a bank of basis heads.
struct DescriptorHeads {
  Eigen::MatrixXd basis;  // n_basis x q, one basis head per row
  Eigen::MatrixXd coeff;  // n_basis x descriptor_length
};

enum class BankVariant { Free, Factorized, Additive, SharedOnly, Descriptor };

struct HeadBank {
  DomainGrid grid;
  int rep_dim = 0;  // p
  int classes = 1;  // C
  std::variant<FreeHeads, FactorizedHeads, AdditiveHeads, SharedHead, DescriptorHeads> payload;

  int head_width() const { return rep_dim * classes; }
  BankVariant variant() const;

  /// Materialized p x C head for one domain; throws for a free bank asked
  /// about a domain outside its seen set.
  Eigen::MatrixXd head_for(const MultiIndex& idx) const;

  /// True when the variant can produce a head for every domain.
  bool covers_all_domains() const;

  void validate() const;

  static HeadBank make_free(const DomainGrid& grid, int rep_dim, int classes,
                            const std::vector<int>& seen);
  static HeadBank make_factorized(const DomainGrid& grid, int rep_dim, int classes, int rank);
  static HeadBank make_additive(const DomainGrid& grid, int rep_dim, int classes);
  static HeadBank make_shared(const DomainGrid& grid, int rep_dim, int classes);
  static HeadBank make_descriptor(const DomainGrid& grid, int rep_dim, int classes);
};

/// Concatenated one-hot encoding of each mode level; length sum_m d_m.
Eigen::VectorXd domain_descriptor(const DomainGrid& grid, const MultiIndex& idx);

/// Number of basis heads the descriptor bank carries (1 + sum_m d_m).
int descriptor_basis_count(const DomainGrid& grid);

// --- Losses -------------------------------------------------------------

enum class LossKind { Squared, Logistic, SoftmaxCrossEntropy };

struct LossSpec {
  LossKind kind = LossKind::SoftmaxCrossEntropy;
  int classes = 2;  // C; 1 for squared/logistic

  void validate() const;
};

/// Per-sample loss given logits (length C per the spec) and label.
double loss_value(const LossSpec& spec, const Eigen::VectorXd& logits, double label);
/// d(loss)/d(logits).
Eigen::VectorXd loss_grad(const LossSpec& spec, const Eigen::VectorXd& logits, double label);

// --- Model bundle and gradients ------------------------------------------

struct Model {
  RepresentationNet net;
  HeadBank bank;
};

/// Gradient records reuse the model layout: a zeroed structural clone whose
/// parameter blocks hold the matching partial derivatives.
using ModelGrads = Model;
ModelGrads zero_grads(const Model& model);

/// Calls fn(double* block, size_t n) for every trainable block in a fixed
/// canonical order (net layers, then bank payload). The identity net and
/// the frozen parts of a bank contribute nothing.
template <class Fn>
void visit_params(Model& model, Fn&& fn);
template <class Fn>
void visit_params(const Model& model, Fn&& fn);

std::size_t param_count(const Model& model);
Eigen::VectorXd pack_params(const Model& model);
void unpack_params(const Eigen::VectorXd& flat, Model& model);

struct BatchItem {
  int domain = 0;  // flat index
  const Sample* sample = nullptr;
};

/// logits = head(domain)^T * phi(x).
Eigen::VectorXd forward(const Model& model, const MultiIndex& domain, const Eigen::VectorXd& x);

/// Mean per-sample loss over the batch plus the mean-attraction regularizer,
/// with exact reverse-mode gradients for every trainable parameter
/// accumulated into `grads` when non-null.
double loss_and_grads(const Model& model, const std::vector<BatchItem>& batch,
                      const LossSpec& spec, double lambda, ModelGrads* grads);

/// (lambda/N) * sum_i ||v_i - mean||^2 over the bank's listed classifier
/// vectors (additive: every level row plus the shared head; factorized:
/// every factor row; other variants list nothing). Gradient contributions
/// are added into `grad_bank` when non-null.
double regularizer(const HeadBank& bank, double lambda, HeadBank* grad_bank = nullptr);

/// Euclidean norm of each materializable head, keyed by flat domain index.
std::vector<std::pair<int, double>> head_norms(const HeadBank& bank);

/// max_x ||phi(x)|| over the supplied points.
double representation_norm_bound(const RepresentationNet& net, const std::vector<Sample>& data);

/// Constants of the regularity assumptions, carried as user-supplied inputs
/// for the bound diagnostic; the strong-convexity and diversity constants
/// are not estimable from data.
struct BoundParams {
  double loss_bound = 1.0;        // B
  double loss_lipschitz = 1.0;    // L
  double head_norm_bound = 1.0;   // W
  double rep_norm_bound = 1.0;    // D_X
  double strong_convexity = 1.0;  // lambda_sc
  double diversity_nu = 1.0;      // nu, in (0, 1]
  double diversity_eps = 0.0;     // eps
  double delta = 0.05;

  void validate() const;
};

// --- template definitions ------------------------------------------------

namespace detail {

template <class ModelT, class Fn>
void visit_params_impl(ModelT& model, Fn&& fn) {
  for (int l = 0; l < model.net.layer_count(); ++l) {
    auto& w = model.net.weights[static_cast<std::size_t>(l)];
    auto& b = model.net.biases[static_cast<std::size_t>(l)];
    fn(w.data(), static_cast<std::size_t>(w.size()));
    fn(b.data(), static_cast<std::size_t>(b.size()));
  }
  auto visit_block = [&fn](auto& m) { fn(m.data(), static_cast<std::size_t>(m.size())); };
  std::visit(
      [&](auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, FreeHeads>) {
          for (auto& h : payload.heads) visit_block(h);
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          for (auto& modes : payload.factors.factors)
            for (auto& f : modes) visit_block(f);
        } else if constexpr (std::is_same_v<T, AdditiveHeads>) {
          visit_block(payload.shared);
          for (auto& b : payload.per_mode) visit_block(b);
        } else if constexpr (std::is_same_v<T, SharedHead>) {
          visit_block(payload.head);
        } else {
          visit_block(payload.basis);
          visit_block(payload.coeff);
        }
      },
      model.bank.payload);
}

}  // namespace detail

template <class Fn>
void visit_params(Model& model, Fn&& fn) {
  detail::visit_params_impl(model, std::forward<Fn>(fn));
}

template <class Fn>
void visit_params(const Model& model, Fn&& fn) {
  detail::visit_params_impl(model, std::forward<Fn>(fn));
}

}  // namespace zsda

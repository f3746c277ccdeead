#pragma once

#include <cstdint>
#include <vector>

#include "zsda/tensor.hpp"

namespace zsda {

/// The set of seen (source) domains, as sorted distinct flat indices.
struct ObservationMask {
  DomainGrid grid;
  std::vector<int> seen;

  int count() const { return static_cast<int>(seen.size()); }
  bool contains(int t) const;
  void validate() const;
};

/// Uniform draw of `count` domains without replacement; every subset of that
/// size is equally likely and the draw is a pure function of the seed.
ObservationMask sample_mask(const DomainGrid& grid, int count, std::uint64_t seed);

/// The (i,i) design on a square two-mode grid.
ObservationMask diagonal_mask(const DomainGrid& grid);

struct CompletionConfig {
  int rank = 1;
  int max_sweeps = 500;
  double tol = 1e-9;        // relative objective change
  int restarts = 1;
  double init_scale = 1.0;  // multiplies the data-driven per-mode RMS scale
  double ridge = 1e-10;     // damping on the per-row normal systems
  std::uint64_t seed = 0;
};

struct CompletionResult {
  CPFactors factors;
  double objective_l1 = 0.0;  // (1/T) sum_{t in mask} sum_j |recon - observed|
  double objective_l2 = 0.0;  // (1/T) sum_{t in mask} sum_j (recon - observed)^2
  std::vector<double> objective_trace;  // L2 after each sweep, winning restart
  int sweeps_used = 0;
  bool converged = false;
  /// False when some (mode, level) pair is never observed: the matching
  /// factor rows are pinned only by the ridge and predictions through them
  /// are extrapolation in the strongest sense.
  bool fully_identified = true;
  /// True when the requested rank is enough to interpolate any observation
  /// set of this shape, so zero residual carries no rank evidence.
  bool rank_saturated = false;
};

/// Alternating least squares over the rank-K factor model, restricted to the
/// observed rows. `observed` has one row per mask entry, in mask order. The
/// L2 objective is minimized per factor row in closed form; restarts are
/// selected by the L1 objective, ties broken by lowest restart index.
CompletionResult complete(const Eigen::MatrixXd& observed, const ObservationMask& mask,
                          const CompletionConfig& cfg);

/// q * sqrt((K*d*M^2*ln(8ed) + ln(q/delta)) / T) — the finite-T cost of
/// generalizing from the seen rows to the full grid.
double completion_generalization_term(int rank, int d_max, int modes, int width,
                                      int seen_count, double delta);

}  // namespace zsda

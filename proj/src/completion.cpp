#include "zsda/completion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "zsda/rng.hpp"

namespace zsda {

bool ObservationMask::contains(int t) const {
  return std::binary_search(seen.begin(), seen.end(), t);
}

void ObservationMask::validate() const {
  if (seen.empty()) throw ShapeError("ObservationMask: at least one seen domain required");
  if (!std::is_sorted(seen.begin(), seen.end()))
    throw ShapeError("ObservationMask: indices must be sorted");
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] < 0 || seen[i] >= grid.domain_count())
      throw BoundsError("ObservationMask: flat index outside grid");
    if (i > 0 && seen[i] == seen[i - 1])
      throw ShapeError("ObservationMask: duplicate index");
  }
}

ObservationMask sample_mask(const DomainGrid& grid, int count, std::uint64_t seed) {
  const int total = grid.domain_count();
  if (count < 1 || count > total) {
    std::ostringstream os;
    os << "sample_mask: count " << count << " outside [1," << total << "]";
    throw DomainError(os.str());
  }
  std::vector<int> pool(static_cast<std::size_t>(total));
  std::iota(pool.begin(), pool.end(), 0);
  auto rng = make_rng(seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform subset.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, total - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  ObservationMask mask;
  mask.grid = grid;
  mask.seen.assign(pool.begin(), pool.begin() + count);
  std::sort(mask.seen.begin(), mask.seen.end());
  return mask;
}

ObservationMask diagonal_mask(const DomainGrid& grid) {
  if (grid.mode_count() != 2 || grid.dim(0) != grid.dim(1))
    throw UnsupportedError("diagonal_mask: requires a square two-mode grid");
  ObservationMask mask;
  mask.grid = grid;
  for (int i = 0; i < grid.dim(0); ++i) mask.seen.push_back(grid.flat_index({i, i}));
  std::sort(mask.seen.begin(), mask.seen.end());
  return mask;
}

namespace {

struct MaskIndex {
  std::vector<MultiIndex> entries;                        // multi-index per observed row
  std::vector<std::vector<std::vector<int>>> rows_at;     // [mode][level] -> observed row ids
  bool fully_identified = true;
};

MaskIndex index_mask(const ObservationMask& mask) {
  MaskIndex mi;
  const auto& grid = mask.grid;
  mi.entries.reserve(mask.seen.size());
  mi.rows_at.resize(static_cast<std::size_t>(grid.mode_count()));
  for (int m = 0; m < grid.mode_count(); ++m)
    mi.rows_at[static_cast<std::size_t>(m)].resize(static_cast<std::size_t>(grid.dim(m)));
  for (int i = 0; i < mask.count(); ++i) {
    MultiIndex idx = grid.multi_index(mask.seen[static_cast<std::size_t>(i)]);
    for (int m = 0; m < grid.mode_count(); ++m)
      mi.rows_at[static_cast<std::size_t>(m)][static_cast<std::size_t>(idx[m])].push_back(i);
    mi.entries.push_back(std::move(idx));
  }
  for (const auto& levels : mi.rows_at)
    for (const auto& rows : levels)
      if (rows.empty()) mi.fully_identified = false;
  return mi;
}

// Residuals on the observed rows: recon(i,:) - observed(i,:).
Eigen::MatrixXd observed_residual(const CPFactors& f, const Eigen::MatrixXd& observed,
                                  const MaskIndex& mi) {
  Eigen::MatrixXd res(observed.rows(), observed.cols());
  Eigen::ArrayXd term(f.width);
  for (Eigen::Index i = 0; i < observed.rows(); ++i) {
    const MultiIndex& idx = mi.entries[static_cast<std::size_t>(i)];
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(f.width);
    for (int k = 0; k < f.rank; ++k) {
      term = f.factor(k, 0).row(idx[0]).transpose().array();
      for (int m = 1; m < f.grid.mode_count(); ++m)
        term *= f.factor(k, m).row(idx[m]).transpose().array();
      acc += term;
    }
    res.row(i) = acc.matrix().transpose() - observed.row(i);
  }
  return res;
}

struct RestartOutcome {
  CPFactors factors;
  double l1 = std::numeric_limits<double>::infinity();
  double l2 = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  int sweeps = 0;
  bool converged = false;
};

// Mode-wise singular vectors of the zero-filled slices; a deterministic
// warm start that avoids most of the degenerate ALS basins random inits
// fall into on sparsely observed grids.
CPFactors hosvd_init(const Eigen::MatrixXd& observed, const ObservationMask& mask,
                     int rank) {
  const auto& grid = mask.grid;
  const int modes = grid.mode_count();
  const int width = static_cast<int>(observed.cols());
  CPFactors f = CPFactors::zeros(rank, grid, width);
  Eigen::VectorXd slice(grid.domain_count());
  for (int j = 0; j < width; ++j) {
    slice.setZero();
    for (int i = 0; i < mask.count(); ++i)
      slice(mask.seen[static_cast<std::size_t>(i)]) = observed(i, j);
    for (int m = 0; m < modes; ++m) {
      // Mode-m unfolding of the zero-filled slice.
      Eigen::MatrixXd unfold(grid.dim(m), grid.domain_count() / grid.dim(m));
      std::vector<int> col(static_cast<std::size_t>(grid.dim(m)), 0);
      for (int t = 0; t < grid.domain_count(); ++t) {
        const int level = grid.multi_index(t)[static_cast<std::size_t>(m)];
        unfold(level, col[static_cast<std::size_t>(level)]++) = slice(t);
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfold, Eigen::ComputeThinU);
      for (int k = 0; k < rank; ++k) {
        if (k < svd.singularValues().size() && svd.singularValues()(k) > 0.0) {
          const double scale =
              std::pow(svd.singularValues()(k), 1.0 / static_cast<double>(modes));
          f.factor(k, m).col(j) = svd.matrixU().col(k) * scale;
        } else {
          // Rank exceeds the unfolding; leave a small deterministic seed so
          // ALS can still grow the term.
          f.factor(k, m).col(j).setConstant(1e-3);
        }
      }
    }
  }
  return f;
}

RestartOutcome run_restart(const Eigen::MatrixXd& observed, const ObservationMask& mask,
                           const MaskIndex& mi, const CompletionConfig& cfg,
                           std::uint64_t seed, bool warm_start) {
  const auto& grid = mask.grid;
  const int modes = grid.mode_count();
  const int width = static_cast<int>(observed.cols());
  const int seen = mask.count();
  const int rank = cfg.rank;

  // Per-mode init scale: the M-fold product of factors should land on the
  // scale of the data, so each mode gets the M-th root of the entry RMS.
  const double rms = std::sqrt(observed.squaredNorm() /
                               static_cast<double>(observed.size()));
  const double mode_scale = cfg.init_scale * std::pow(rms, 1.0 / static_cast<double>(modes));

  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CPFactors f = CPFactors::zeros(rank, grid, width);
  if (warm_start && rms > 0.0) {
    f = hosvd_init(observed, mask, rank);
  } else {
    for (int k = 0; k < rank; ++k)
      for (int m = 0; m < modes; ++m)
        for (Eigen::Index a = 0; a < f.factor(k, m).rows(); ++a)
          for (Eigen::Index b = 0; b < f.factor(k, m).cols(); ++b)
            f.factor(k, m)(a, b) = gauss(rng) * mode_scale;
  }

  // Objective changes are measured against the data energy, so runs that
  // reach numerical zero register as converged instead of chasing noise.
  const double data_scale = std::max(observed.squaredNorm() / seen, 1e-300);

  // partial(i) row k = product over the other modes of the selected rows.
  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(seen));
  Eigen::MatrixXd gram(rank, rank);
  Eigen::VectorXd rhs(rank);
  Eigen::MatrixXd design;
  Eigen::VectorXd target;

  double prev_obj = observed_residual(f, observed, mi).squaredNorm() / seen;
  RestartOutcome out;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    for (int m = 0; m < modes; ++m) {
      for (int i = 0; i < seen; ++i) {
        const MultiIndex& idx = mi.entries[static_cast<std::size_t>(i)];
        Eigen::MatrixXd& p = partial[static_cast<std::size_t>(i)];
        p.resize(rank, width);
        for (int k = 0; k < rank; ++k) {
          Eigen::ArrayXd prod = Eigen::ArrayXd::Ones(width);
          for (int mm = 0; mm < modes; ++mm) {
            if (mm == m) continue;
            prod *= f.factor(k, mm).row(idx[mm]).transpose().array();
          }
          p.row(k) = prod.matrix().transpose();
        }
      }
      for (int level = 0; level < grid.dim(m); ++level) {
        const auto& rows = mi.rows_at[static_cast<std::size_t>(m)][static_cast<std::size_t>(level)];
        if (rows.empty()) {
          // Never observed: the ridge pins these rows at zero.
          for (int k = 0; k < rank; ++k) f.factor(k, m).row(level).setZero();
          continue;
        }
        const int nrows = static_cast<int>(rows.size());
        design.resize(nrows, rank);
        target.resize(nrows);
        for (int j = 0; j < width; ++j) {
          for (int a = 0; a < nrows; ++a) {
            const int i = rows[static_cast<std::size_t>(a)];
            for (int k = 0; k < rank; ++k)
              design(a, k) = partial[static_cast<std::size_t>(i)](k, j);
            target(a) = observed(i, j);
          }
          gram.noalias() = design.transpose() * design;
          gram.diagonal().array() += cfg.ridge;
          rhs.noalias() = design.transpose() * target;
          Eigen::VectorXd sol = gram.ldlt().solve(rhs);
          for (int k = 0; k < rank; ++k) f.factor(k, m)(level, j) = sol(k);
        }
      }
    }
    const double obj = observed_residual(f, observed, mi).squaredNorm() / seen;
    out.trace.push_back(obj);
    out.sweeps = sweep;
    const double rel = std::abs(prev_obj - obj) / data_scale;
    prev_obj = obj;
    if (rel < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  Eigen::MatrixXd res = observed_residual(f, observed, mi);
  out.l1 = res.cwiseAbs().sum() / seen;
  out.l2 = res.squaredNorm() / seen;
  out.factors = std::move(f);
  return out;
}

}  // namespace

CompletionResult complete(const Eigen::MatrixXd& observed, const ObservationMask& mask,
                          const CompletionConfig& cfg) {
  mask.validate();
  if (observed.rows() != mask.count())
    throw ShapeError("complete: observed row count must match mask size");
  if (observed.cols() < 1) throw ShapeError("complete: width must be >= 1");
  if (!observed.allFinite()) throw DataError("complete: non-finite observed entry");
  if (cfg.rank < 1) throw DomainError("complete: rank must be >= 1");
  if (cfg.tol <= 0) throw DomainError("complete: tol must be > 0");
  if (cfg.restarts < 1) throw DomainError("complete: restarts must be >= 1");
  if (cfg.ridge < 0) throw DomainError("complete: ridge must be >= 0");

  const MaskIndex mi = index_mask(mask);

  // Any tensor of this shape can be interpolated exactly at rank
  // min_m(D/d_m); K observed cells can always be matched with K indicator
  // rank-one terms.
  const auto& grid = mask.grid;
  int interp_rank = grid.domain_count() / grid.dims()[0];
  for (int m = 0; m < grid.mode_count(); ++m)
    interp_rank = std::min(interp_rank, grid.domain_count() / grid.dim(m));
  interp_rank = std::min(interp_rank, mask.count());

  RestartOutcome best;
  for (int r = 0; r < cfg.restarts; ++r) {
    RestartOutcome cur = run_restart(observed, mask, mi, cfg,
                                     derive_seed(cfg.seed, static_cast<std::uint64_t>(r)),
                                     /*warm_start=*/r == 0);
    if (cur.l1 < best.l1) best = std::move(cur);
  }

  CompletionResult result;
  result.factors = std::move(best.factors);
  result.objective_l1 = best.l1;
  result.objective_l2 = best.l2;
  result.objective_trace = std::move(best.trace);
  result.sweeps_used = best.sweeps;
  result.converged = best.converged;
  result.fully_identified = mi.fully_identified;
  result.rank_saturated = cfg.rank >= interp_rank;
  return result;
}

double completion_generalization_term(int rank, int d_max, int modes, int width,
                                      int seen_count, double delta) {
  if (width < 1 || seen_count < 1)
    throw DomainError("completion_generalization_term: width and seen count must be >= 1");
  if (delta <= 0.0 || delta >= 1.0)
    throw DomainError("completion_generalization_term: delta must be in (0,1)");
  const double capacity = pdim_bound(rank, d_max, modes);
  const double w = static_cast<double>(width);
  return w * std::sqrt((capacity + std::log(w / delta)) / static_cast<double>(seen_count));
}

}  // namespace zsda

#include "zsda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace zsda {

DomainGrid::DomainGrid(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ShapeError("DomainGrid: at least one mode required");
  long long total = 1;
  for (int d : dims_) {
    if (d < 1) throw ShapeError("DomainGrid: every mode dimension must be >= 1");
    total *= d;
    if (total > (1LL << 31)) throw ShapeError("DomainGrid: domain count overflow");
  }
  total_ = static_cast<int>(total);
}

int DomainGrid::max_dim() const { return *std::max_element(dims_.begin(), dims_.end()); }

int DomainGrid::flat_index(const MultiIndex& idx) const {
  if (static_cast<int>(idx.size()) != mode_count()) {
    std::ostringstream os;
    os << "flat_index: expected " << mode_count() << " modes, got " << idx.size();
    throw BoundsError(os.str());
  }
  int t = 0;
  for (int m = 0; m < mode_count(); ++m) {
    if (idx[m] < 0 || idx[m] >= dims_[m]) {
      std::ostringstream os;
      os << "flat_index: mode " << m << " level " << idx[m] << " outside [0," << dims_[m] << ")";
      throw BoundsError(os.str());
    }
    t = t * dims_[m] + idx[m];
  }
  return t;
}

MultiIndex DomainGrid::multi_index(int t) const {
  if (t < 0 || t >= total_) {
    std::ostringstream os;
    os << "multi_index: flat index " << t << " outside [0," << total_ << ")";
    throw BoundsError(os.str());
  }
  MultiIndex idx(static_cast<std::size_t>(mode_count()));
  for (int m = mode_count() - 1; m >= 0; --m) {
    idx[m] = t % dims_[m];
    t /= dims_[m];
  }
  return idx;
}

int DomainGrid::manhattan(const MultiIndex& a, const MultiIndex& b) const {
  int s = 0;
  for (int m = 0; m < mode_count(); ++m) s += std::abs(a[m] - b[m]);
  return s;
}

CPFactors CPFactors::zeros(int rank, const DomainGrid& grid, int width) {
  if (rank < 1) throw ShapeError("CPFactors: rank must be >= 1");
  if (width < 1) throw ShapeError("CPFactors: width must be >= 1");
  CPFactors f;
  f.rank = rank;
  f.grid = grid;
  f.width = width;
  f.factors.resize(static_cast<std::size_t>(rank));
  for (auto& modes : f.factors) {
    modes.reserve(static_cast<std::size_t>(grid.mode_count()));
    for (int m = 0; m < grid.mode_count(); ++m)
      modes.push_back(Eigen::MatrixXd::Zero(grid.dim(m), width));
  }
  return f;
}

void CPFactors::validate() const {
  if (rank < 1 || width < 1) throw ShapeError("CPFactors: rank and width must be >= 1");
  if (static_cast<int>(factors.size()) != rank) throw ShapeError("CPFactors: rank term count mismatch");
  for (const auto& modes : factors) {
    if (static_cast<int>(modes.size()) != grid.mode_count())
      throw ShapeError("CPFactors: mode count mismatch");
    for (int m = 0; m < grid.mode_count(); ++m) {
      const auto& f = modes[static_cast<std::size_t>(m)];
      if (f.rows() != grid.dim(m) || f.cols() != width)
        throw ShapeError("CPFactors: factor matrix shape mismatch");
      if (!f.allFinite()) throw DataError("CPFactors: non-finite factor entry");
    }
  }
}

void HeadTensor::validate() const {
  if (values.rows() != grid.domain_count() || values.cols() != width)
    throw ShapeError("HeadTensor: values shape mismatch");
  if (!values.allFinite()) throw DataError("HeadTensor: non-finite entry");
}

Eigen::VectorXd cp_reconstruct_head(const CPFactors& factors, const MultiIndex& idx) {
  const int t = factors.grid.flat_index(idx);  // bounds check
  (void)t;
  Eigen::VectorXd head = Eigen::VectorXd::Zero(factors.width);
  Eigen::ArrayXd term(factors.width);
  for (int k = 0; k < factors.rank; ++k) {
    term = factors.factor(k, 0).row(idx[0]).transpose().array();
    for (int m = 1; m < factors.grid.mode_count(); ++m)
      term *= factors.factor(k, m).row(idx[m]).transpose().array();
    head.array() += term;
  }
  return head;
}

HeadTensor cp_materialize(const CPFactors& factors) {
  factors.validate();
  HeadTensor out;
  out.grid = factors.grid;
  out.width = factors.width;
  out.values.resize(factors.grid.domain_count(), factors.width);
  for (int t = 0; t < factors.grid.domain_count(); ++t)
    out.values.row(t) = cp_reconstruct_head(factors, factors.grid.multi_index(t)).transpose();
  return out;
}

CPFactors additive_to_cp(const Eigen::VectorXd& shared,
                         const std::vector<Eigen::MatrixXd>& per_mode) {
  if (per_mode.empty()) throw ShapeError("additive_to_cp: at least one mode required");
  const int width = static_cast<int>(shared.size());
  std::vector<int> dims;
  dims.reserve(per_mode.size());
  for (const auto& beta : per_mode) {
    if (beta.cols() != width) throw ShapeError("additive_to_cp: per-mode width mismatch");
    dims.push_back(static_cast<int>(beta.rows()));
  }
  DomainGrid grid(dims);
  const int modes = grid.mode_count();

  // Rank term m carries beta_m on mode m; the extra term carries the shared
  // head on mode 0. Every other slot is the all-ones padding vector.
  CPFactors f = CPFactors::zeros(modes + 1, grid, width);
  for (int k = 0; k <= modes; ++k)
    for (int m = 0; m < modes; ++m) f.factor(k, m).setOnes();
  for (int m = 0; m < modes; ++m) f.factor(m, m) = per_mode[static_cast<std::size_t>(m)];
  f.factor(modes, 0).rowwise() = shared.transpose();
  return f;
}

double pdim_bound(int rank, int d, int modes) {
  if (rank < 1 || d < 1 || modes < 1)
    throw DomainError("pdim_bound: all arguments must be >= 1");
  const double dd = static_cast<double>(d);
  return static_cast<double>(rank) * dd * static_cast<double>(modes) *
         static_cast<double>(modes) * std::log(8.0 * std::exp(1.0) * dd);
}

}  // namespace zsda

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "zsda/errors.hpp"

namespace zsda {

/// Address of one domain on the grid: one level index per mode.
using MultiIndex = std::vector<int>;

/// The d_1 x ... x d_M lattice of domains. Flat indices are row-major
/// (last mode varies fastest); this ordering is fixed for file-format
/// stability.
class DomainGrid {
 public:
  DomainGrid() = default;
  explicit DomainGrid(std::vector<int> dims);

  int mode_count() const { return static_cast<int>(dims_.size()); }
  int dim(int mode) const { return dims_.at(static_cast<std::size_t>(mode)); }
  const std::vector<int>& dims() const { return dims_; }
  int domain_count() const { return total_; }
  int max_dim() const;

  int flat_index(const MultiIndex& idx) const;
  MultiIndex multi_index(int t) const;

  /// Sum over modes of |i_m - i'_m|.
  int manhattan(const MultiIndex& a, const MultiIndex& b) const;

  bool operator==(const DomainGrid& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int> dims_;
  int total_ = 0;
};

/// Rank-K factor model: factor(k, m) is a d_m x q matrix whose row t_m is
/// the mode-m factor vector of rank term k. The head at multi-index I is
/// the sum over k of the entrywise product of the M selected rows.
/// Factors are non-identifiable (permutation/scale); correctness statements
/// live at the level of materialized tensors.
struct CPFactors {
  int rank = 0;
  DomainGrid grid;
  int width = 0;
  std::vector<std::vector<Eigen::MatrixXd>> factors;  // [rank][mode]: d_m x q

  static CPFactors zeros(int rank, const DomainGrid& grid, int width);
  const Eigen::MatrixXd& factor(int k, int m) const { return factors[k][m]; }
  Eigen::MatrixXd& factor(int k, int m) { return factors[k][m]; }
  void validate() const;  // shape and finiteness checks
};

/// Dense D x q array of per-domain heads; row t is the head for flat index t.
struct HeadTensor {
  DomainGrid grid;
  int width = 0;
  Eigen::MatrixXd values;  // domain_count x width

  void validate() const;
};

Eigen::VectorXd cp_reconstruct_head(const CPFactors& factors, const MultiIndex& idx);
HeadTensor cp_materialize(const CPFactors& factors);

/// Builds the ones-padded rank-(M+1) factor set whose materialization is
/// exactly shared + sum_m per_mode[m].row(t_m) at every domain.
CPFactors additive_to_cp(const Eigen::VectorXd& shared,
                         const std::vector<Eigen::MatrixXd>& per_mode);

/// Capacity bound for the rank-K class on a d^(xM) grid: K*d*M^2*ln(8*e*d).
/// The log base is not pinned by the source formula; natural log is used
/// throughout and the choice only shifts diagnostics.
double pdim_bound(int rank, int d, int modes);

}  // namespace zsda

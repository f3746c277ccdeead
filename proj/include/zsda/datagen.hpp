#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "zsda/model.hpp"

namespace zsda {

enum class LinkKind { Gaussian, Logistic, Softmax };

struct LinkSpec {
  LinkKind kind = LinkKind::Logistic;
  double noise_sigma = 0.0;  // gaussian link only
};

/// Ground-truth generator: a representation net plus exactly rank-K head
/// factors, realizable by construction within the configured architecture
/// family.
struct PlantedModel {
  RepresentationNet net;
  CPFactors factors;  // width = rep_dim * classes
  int classes = 1;
  LinkSpec link;
  std::uint64_t seed = 0;

  Eigen::MatrixXd head_for(const MultiIndex& idx) const;
  /// The planted predictor packaged as a factorized-bank model.
  Model as_model() const;
  LossSpec loss_spec() const;
};

/// Net weights iid Gaussian scaled by 1/sqrt(fan-in); factors iid
/// uniform(-1,1) rescaled so the RMS of the planted head norms is 1.
PlantedModel plant_model(const DomainGrid& grid, const std::vector<int>& widths,
                         const std::vector<Activation>& hidden_acts, int classes, int rank,
                         LinkSpec link, std::uint64_t seed);

/// Convenience overload with the default desk-scale architecture
/// [input_dim, 64, rep_dim] with ReLU.
PlantedModel plant_model(const DomainGrid& grid, int input_dim, int rep_dim, int classes,
                         int rank, LinkSpec link, std::uint64_t seed);

/// Planted model whose heads are exactly shared + sum of per-mode effects
/// (the ones-padded rank-(M+1) special case) over an identity
/// representation; same Gaussian draws and RMS-1 head scaling as
/// plant_model.
PlantedModel plant_additive_model(const DomainGrid& grid, int rep_dim, int classes,
                                  LinkSpec link, std::uint64_t seed);

/// x ~ N(0, I) shared across domains; y drawn through the link applied to
/// head(domain)^T phi*(x). Pure function of (model, domain, n, seed).
std::vector<Sample> sample_domain_data(const PlantedModel& model, const MultiIndex& idx, int n,
                                       std::uint64_t seed);

struct DomainDataset {
  DomainGrid grid;
  int input_dim = 0;
  int classes = 1;
  int per_domain = 0;  // nominal n
  bool partial = false;
  std::vector<int> raster_shape;            // [h, w] when samples are rasters
  std::vector<std::vector<Sample>> samples;  // indexed by flat domain
  std::string provenance;                    // JSON object text

  int total_samples() const;
  std::vector<Sample> pooled() const;
  void validate() const;
};

/// n samples for every domain on the grid; per-domain streams use
/// derive_seed(master, flat_index) so generation order is irrelevant.
DomainDataset planted_dataset(const PlantedModel& model, int n, std::uint64_t master_seed);

// --- Grid-transform analog -------------------------------------------------

struct GridTransformConfig {
  std::vector<double> rotations_deg = {-30.0, -15.0, 0.0, 15.0, 30.0};
  std::vector<std::array<double, 2>> translations = {
      {-3.0, 0.0}, {0.0, -3.0}, {0.0, 0.0}, {0.0, 3.0}, {3.0, 0.0}};
  int classes = 4;
  int per_domain = 200;
  std::uint64_t seed = 0;
  /// Class prototypes depend on `seed` only; sample draws also mix in this
  /// salt, so train/test splits share patterns but not noise.
  std::uint64_t draw_salt = 0;

  enum class Base { SmoothPrototypes, PointSet, ExternalFile };
  Base base = Base::SmoothPrototypes;

  // raster prototypes
  int raster_h = 16;
  int raster_w = 16;
  int bumps = 5;           // gaussian bumps per class pattern
  double bump_sigma = 2.0; // in pixels
  double pixel_noise = 0.7;

  // point-set prototypes
  int pointset_size = 8;
  double point_noise = 0.25;

  std::string external_path;  // dataset file supplying base rasters
};

/// Rotation about the raster center (degrees) followed by translation of
/// (d_row, d_col) pixels; bilinear interpolation, zero outside.
Eigen::VectorXd transform_raster(const Eigen::VectorXd& img, int h, int w, double deg,
                                 double d_row, double d_col);

/// Exact affine map on interleaved (row, col) coordinate pairs.
Eigen::VectorXd transform_points(const Eigen::VectorXd& pts, double deg, double d_row,
                                 double d_col);

/// Smooth windowed class prototype used by the desk-scale analog.
Eigen::VectorXd prototype_raster(int h, int w, int bumps, double bump_sigma,
                                 std::uint64_t seed);

/// Domain (i, j) applies rotations_deg[i] then translations[j] to the class
/// base pattern and adds iid noise. Grid dims = [#rotations, #translations].
DomainDataset grid_transform_dataset(const GridTransformConfig& cfg);

// --- Dataset file IO ---------------------------------------------------------

/// Line-oriented text: a JSON header line, then one JSON sample per line.
void write_dataset(const std::string& path, const DomainDataset& ds);
DomainDataset read_dataset(const std::string& path);

}  // namespace zsda

#include "zsda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "zsda/rng.hpp"

namespace zsda {

using nlohmann::json;

// --- Planted models ----------------------------------------------------------

Eigen::MatrixXd PlantedModel::head_for(const MultiIndex& idx) const {
  const Eigen::VectorXd w = cp_reconstruct_head(factors, idx);
  return Eigen::Map<const Eigen::MatrixXd>(w.data(), net.output_dim(), classes);
}

Model PlantedModel::as_model() const {
  HeadBank bank{factors.grid, net.output_dim(), classes, FactorizedHeads{factors}};
  return Model{net, std::move(bank)};
}

LossSpec PlantedModel::loss_spec() const {
  switch (link.kind) {
    case LinkKind::Gaussian:
      return LossSpec{LossKind::Squared, 1};
    case LinkKind::Logistic:
      return LossSpec{LossKind::Logistic, 1};
    case LinkKind::Softmax:
      return LossSpec{LossKind::SoftmaxCrossEntropy, classes};
  }
  throw DomainError("unknown link kind");
}

PlantedModel plant_model(const DomainGrid& grid, const std::vector<int>& widths,
                         const std::vector<Activation>& hidden_acts, int classes, int rank,
                         LinkSpec link, std::uint64_t seed) {
  if (classes < 1 || rank < 1) throw ShapeError("plant_model: classes and rank must be >= 1");
  if (link.kind != LinkKind::Softmax && classes != 1)
    throw ShapeError("plant_model: gaussian/logistic links require classes == 1");
  if (link.kind == LinkKind::Softmax && classes < 2)
    throw ShapeError("plant_model: softmax link requires classes >= 2");

  PlantedModel model;
  model.classes = classes;
  model.link = link;
  model.seed = seed;
  model.net = RepresentationNet::make(widths, hidden_acts);

  auto rng = make_rng(derive_seed(seed, 0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < model.net.layer_count(); ++l) {
    auto& w = model.net.weights[static_cast<std::size_t>(l)];
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gauss(rng) * scale;
  }

  const int width = model.net.output_dim() * classes;
  auto frng = make_rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  model.factors = CPFactors::zeros(rank, grid, width);
  for (int k = 0; k < rank; ++k)
    for (int m = 0; m < grid.mode_count(); ++m)
      for (Eigen::Index a = 0; a < model.factors.factor(k, m).rows(); ++a)
        for (Eigen::Index b = 0; b < model.factors.factor(k, m).cols(); ++b)
          model.factors.factor(k, m)(a, b) = unif(frng);

  // Rescale so the head norms have RMS exactly 1: scaling every mode by c
  // scales heads by c^M.
  const HeadTensor heads = cp_materialize(model.factors);
  const double rms =
      std::sqrt(heads.values.squaredNorm() / static_cast<double>(grid.domain_count()));
  const double per_mode =
      std::pow(1.0 / rms, 1.0 / static_cast<double>(grid.mode_count()));
  for (int k = 0; k < rank; ++k)
    for (int m = 0; m < grid.mode_count(); ++m) model.factors.factor(k, m) *= per_mode;
  return model;
}

PlantedModel plant_model(const DomainGrid& grid, int input_dim, int rep_dim, int classes,
                         int rank, LinkSpec link, std::uint64_t seed) {
  return plant_model(grid, {input_dim, 64, rep_dim}, {Activation::ReLU}, classes, rank, link,
                     seed);
}

PlantedModel plant_additive_model(const DomainGrid& grid, int rep_dim, int classes,
                                  LinkSpec link, std::uint64_t seed) {
  if (link.kind != LinkKind::Softmax && classes != 1)
    throw ShapeError("plant_additive_model: gaussian/logistic links require classes == 1");
  const int width = rep_dim * classes;
  auto rng = make_rng(derive_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd shared(width);
  for (int j = 0; j < width; ++j) shared(j) = gauss(rng);
  std::vector<Eigen::MatrixXd> per_mode;
  for (int m = 0; m < grid.mode_count(); ++m) {
    Eigen::MatrixXd beta(grid.dim(m), width);
    for (Eigen::Index i = 0; i < beta.size(); ++i) *(beta.data() + i) = gauss(rng);
    per_mode.push_back(std::move(beta));
  }

  PlantedModel model;
  model.net = RepresentationNet::make({rep_dim}, {});
  model.factors = additive_to_cp(shared, per_mode);
  model.classes = classes;
  model.link = link;
  model.seed = seed;

  // Uniform per-mode rescaling keeps the additive structure while pinning
  // the head-norm RMS at 1.
  const HeadTensor heads = cp_materialize(model.factors);
  const double rms =
      std::sqrt(heads.values.squaredNorm() / static_cast<double>(grid.domain_count()));
  const double per_mode_scale =
      std::pow(1.0 / rms, 1.0 / static_cast<double>(grid.mode_count()));
  for (int k = 0; k < model.factors.rank; ++k)
    for (int m = 0; m < grid.mode_count(); ++m) model.factors.factor(k, m) *= per_mode_scale;
  return model;
}

std::vector<Sample> sample_domain_data(const PlantedModel& model, const MultiIndex& idx, int n,
                                       std::uint64_t seed) {
  if (n < 1) throw DomainError("sample_domain_data: n must be >= 1");
  const Eigen::MatrixXd head = model.head_for(idx);
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.x.resize(model.net.input_dim());
    for (Eigen::Index j = 0; j < s.x.size(); ++j) s.x(j) = gauss(rng);
    const Eigen::VectorXd z = head.transpose() * model.net.forward(s.x);
    switch (model.link.kind) {
      case LinkKind::Gaussian:
        s.y = z(0) + model.link.noise_sigma * gauss(rng);
        break;
      case LinkKind::Logistic: {
        const double p = 1.0 / (1.0 + std::exp(-z(0)));
        s.y = unif(rng) < p ? 1.0 : 0.0;
        break;
      }
      case LinkKind::Softmax: {
        Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp().matrix();
        p /= p.sum();
        double u = unif(rng);
        int label = model.classes - 1;
        for (int c = 0; c < model.classes; ++c) {
          u -= p(c);
          if (u < 0.0) {
            label = c;
            break;
          }
        }
        s.y = static_cast<double>(label);
        break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

// --- DomainDataset -------------------------------------------------------------

int DomainDataset::total_samples() const {
  int total = 0;
  for (const auto& d : samples) total += static_cast<int>(d.size());
  return total;
}

std::vector<Sample> DomainDataset::pooled() const {
  std::vector<Sample> all;
  all.reserve(static_cast<std::size_t>(total_samples()));
  for (const auto& d : samples) all.insert(all.end(), d.begin(), d.end());
  return all;
}

void DomainDataset::validate() const {
  if (static_cast<int>(samples.size()) != grid.domain_count())
    throw ShapeError("DomainDataset: per-domain list count must equal domain count");
  for (const auto& domain : samples) {
    if (!partial && !domain.empty() && static_cast<int>(domain.size()) != per_domain)
      throw DataError("DomainDataset: stored domain sample count differs from n");
    for (const auto& s : domain) {
      if (s.x.size() != input_dim) throw ShapeError("DomainDataset: sample width mismatch");
      if (!s.x.allFinite() || !std::isfinite(s.y)) throw DataError("DomainDataset: non-finite sample");
      if (classes > 1 &&
          (s.y != std::floor(s.y) || s.y < 0.0 || s.y >= static_cast<double>(classes)))
        throw DataError("DomainDataset: label outside [0, C)");
    }
  }
}

DomainDataset planted_dataset(const PlantedModel& model, int n, std::uint64_t master_seed) {
  DomainDataset ds;
  ds.grid = model.factors.grid;
  ds.input_dim = model.net.input_dim();
  switch (model.link.kind) {
    case LinkKind::Gaussian:
      ds.classes = 1;
      break;
    case LinkKind::Logistic:
      ds.classes = 2;
      break;
    case LinkKind::Softmax:
      ds.classes = model.classes;
      break;
  }
  ds.per_domain = n;
  ds.samples.resize(static_cast<std::size_t>(ds.grid.domain_count()));
  for (int t = 0; t < ds.grid.domain_count(); ++t)
    ds.samples[static_cast<std::size_t>(t)] = sample_domain_data(
        model, ds.grid.multi_index(t), n, derive_seed(master_seed, static_cast<std::uint64_t>(t)));
  json prov;
  prov["generator"] = "planted";
  prov["seed"] = master_seed;
  prov["model_seed"] = model.seed;
  prov["domain_seed_rule"] = "derive_seed(master, flat_index)";
  prov["head_scaling"] = "rms-1";
  ds.provenance = prov.dump();
  return ds;
}

// --- transforms -----------------------------------------------------------------

namespace {

double bilinear(const Eigen::VectorXd& img, int h, int w, double row, double col) {
  if (row < 0.0 || col < 0.0 || row > h - 1 || col > w - 1) return 0.0;
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const int r1 = std::min(r0 + 1, h - 1);
  const int c1 = std::min(c0 + 1, w - 1);
  const double fr = row - r0;
  const double fc = col - c0;
  const double v00 = img(r0 * w + c0);
  const double v01 = img(r0 * w + c1);
  const double v10 = img(r1 * w + c0);
  const double v11 = img(r1 * w + c1);
  return (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11);
}

}  // namespace

Eigen::VectorXd transform_raster(const Eigen::VectorXd& img, int h, int w, double deg,
                                 double d_row, double d_col) {
  if (img.size() != static_cast<Eigen::Index>(h) * w)
    throw ShapeError("transform_raster: raster size mismatch");
  const double rad = deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
  Eigen::VectorXd out(img.size());
  // Inverse map: undo the translation, then the rotation.
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const double yr = r - cr - d_row;
      const double xc = col - cc - d_col;
      const double src_r = c * yr + s * xc + cr;
      const double src_c = -s * yr + c * xc + cc;
      out(r * w + col) = bilinear(img, h, w, src_r, src_c);
    }
  }
  return out;
}

Eigen::VectorXd transform_points(const Eigen::VectorXd& pts, double deg, double d_row,
                                 double d_col) {
  if (pts.size() % 2 != 0) throw ShapeError("transform_points: interleaved pairs expected");
  const double rad = deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  Eigen::VectorXd out(pts.size());
  for (Eigen::Index i = 0; i < pts.size(); i += 2) {
    const double row = pts(i), col = pts(i + 1);
    out(i) = c * row - s * col + d_row;
    out(i + 1) = s * row + c * col + d_col;
  }
  return out;
}

Eigen::VectorXd prototype_raster(int h, int w, int bumps, double bump_sigma,
                                 std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
  const double radius = std::min(h, w) / 2.0;

  Eigen::VectorXd img = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h) * w);
  for (int b = 0; b < bumps; ++b) {
    const double amp = (unif(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 0.5 * unif(rng));
    const double ang = 2.0 * std::numbers::pi * unif(rng);
    const double dist = 0.4 * radius * std::sqrt(unif(rng));
    const double br = cr + dist * std::sin(ang);
    const double bc = cc + dist * std::cos(ang);
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        const double d2 = (r - br) * (r - br) + (col - bc) * (col - bc);
        img(r * w + col) += amp * std::exp(-d2 / (2.0 * bump_sigma * bump_sigma));
      }
  }
  // Cosine window keeps the support inside the inscribed disc, so rotations
  // never move mass across the raster boundary. The taper is wide; a sharp
  // edge would dominate the bilinear interpolation error.
  const double inner = 0.45 * radius;
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) {
      const double d = std::sqrt((r - cr) * (r - cr) + (col - cc) * (col - cc));
      double win = 1.0;
      if (d >= radius) {
        win = 0.0;
      } else if (d > inner) {
        const double u = (d - inner) / (radius - inner);
        const double cu = std::cos(0.5 * std::numbers::pi * u);
        win = cu * cu;
      }
      img(r * w + col) *= win;
    }
  const double peak = img.cwiseAbs().maxCoeff();
  if (peak > 0.0) img /= peak;
  return img;
}

DomainDataset grid_transform_dataset(const GridTransformConfig& cfg) {
  if (cfg.rotations_deg.empty() || cfg.translations.empty())
    throw ShapeError("grid_transform_dataset: rotation/translation lists must be non-empty");
  if (cfg.classes < 2) throw ShapeError("grid_transform_dataset: at least 2 classes required");
  if (cfg.per_domain < 1) throw DomainError("grid_transform_dataset: per_domain must be >= 1");

  DomainGrid grid({static_cast<int>(cfg.rotations_deg.size()),
                   static_cast<int>(cfg.translations.size())});
  DomainDataset ds;
  ds.grid = grid;
  ds.classes = cfg.classes;
  ds.per_domain = cfg.per_domain;
  ds.samples.resize(static_cast<std::size_t>(grid.domain_count()));

  bool clipped = false;
  std::vector<std::array<double, 2>> offsets = cfg.translations;
  if (cfg.base != GridTransformConfig::Base::PointSet) {
    for (auto& t : offsets) {
      for (int a = 0; a < 2; ++a) {
        const double bound = (a == 0 ? cfg.raster_h : cfg.raster_w) - 1.0;
        if (std::abs(t[static_cast<std::size_t>(a)]) > bound) {
          t[static_cast<std::size_t>(a)] =
              std::clamp(t[static_cast<std::size_t>(a)], -bound, bound);
          clipped = true;
        }
      }
    }
  }

  // Base patterns per class.
  std::vector<std::vector<Eigen::VectorXd>> base(static_cast<std::size_t>(cfg.classes));
  double noise = 0.0;
  switch (cfg.base) {
    case GridTransformConfig::Base::SmoothPrototypes: {
      ds.input_dim = cfg.raster_h * cfg.raster_w;
      ds.raster_shape = {cfg.raster_h, cfg.raster_w};
      noise = cfg.pixel_noise;
      for (int c = 0; c < cfg.classes; ++c)
        base[static_cast<std::size_t>(c)].push_back(
            prototype_raster(cfg.raster_h, cfg.raster_w, cfg.bumps, cfg.bump_sigma,
                             derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(c))));
      break;
    }
    case GridTransformConfig::Base::PointSet: {
      ds.input_dim = 2 * cfg.pointset_size;
      noise = cfg.point_noise;
      auto rng = make_rng(derive_seed(cfg.seed, 2000));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const double radius = 4.0;
      for (int c = 0; c < cfg.classes; ++c) {
        Eigen::VectorXd pts(2 * cfg.pointset_size);
        for (int i = 0; i < cfg.pointset_size; ++i) {
          const double ang = 2.0 * std::numbers::pi * unif(rng);
          const double dist = radius * std::sqrt(unif(rng));
          pts(2 * i) = dist * std::sin(ang);
          pts(2 * i + 1) = dist * std::cos(ang);
        }
        base[static_cast<std::size_t>(c)].push_back(std::move(pts));
      }
      break;
    }
    case GridTransformConfig::Base::ExternalFile: {
      DomainDataset ext = read_dataset(cfg.external_path);
      if (ext.raster_shape.size() != 2)
        throw DataError("grid_transform_dataset: external base must carry a raster shape");
      ds.input_dim = ext.input_dim;
      ds.raster_shape = ext.raster_shape;
      noise = cfg.pixel_noise;
      for (const auto& domain : ext.samples)
        for (const auto& s : domain) {
          const int c = static_cast<int>(s.y);
          if (c < cfg.classes) base[static_cast<std::size_t>(c)].push_back(s.x);
        }
      for (int c = 0; c < cfg.classes; ++c)
        if (base[static_cast<std::size_t>(c)].empty())
          throw DataError("grid_transform_dataset: external base missing a class");
      break;
    }
  }

  const int h = ds.raster_shape.size() == 2 ? ds.raster_shape[0] : 0;
  const int w = ds.raster_shape.size() == 2 ? ds.raster_shape[1] : 0;

  const std::uint64_t draw_seed = derive_seed(cfg.seed, 7777 + cfg.draw_salt);
  for (int t = 0; t < grid.domain_count(); ++t) {
    const MultiIndex idx = grid.multi_index(t);
    const double deg = cfg.rotations_deg[static_cast<std::size_t>(idx[0])];
    const auto& off = offsets[static_cast<std::size_t>(idx[1])];
    auto rng = make_rng(derive_seed(draw_seed, static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto& out = ds.samples[static_cast<std::size_t>(t)];
    out.reserve(static_cast<std::size_t>(cfg.per_domain));
    for (int i = 0; i < cfg.per_domain; ++i) {
      const int c = i % cfg.classes;  // balanced classes
      const auto& pool = base[static_cast<std::size_t>(c)];
      const auto& pattern = pool[static_cast<std::size_t>(i / cfg.classes) % pool.size()];
      Sample s;
      s.x = (cfg.base == GridTransformConfig::Base::PointSet)
                ? transform_points(pattern, deg, off[0], off[1])
                : transform_raster(pattern, h, w, deg, off[0], off[1]);
      for (Eigen::Index j = 0; j < s.x.size(); ++j) s.x(j) += noise * gauss(rng);
      s.y = static_cast<double>(c);
      out.push_back(std::move(s));
    }
  }

  json prov;
  prov["generator"] = "grid_transform";
  prov["seed"] = cfg.seed;
  prov["rotations_deg"] = cfg.rotations_deg;
  prov["translations"] = cfg.translations;
  prov["base"] = cfg.base == GridTransformConfig::Base::SmoothPrototypes ? "prototypes"
                 : cfg.base == GridTransformConfig::Base::PointSet       ? "pointset"
                                                                         : "external";
  prov["noise"] = noise;
  prov["translation_clipped"] = clipped;
  ds.provenance = prov.dump();
  return ds;
}

// --- file IO -----------------------------------------------------------------

void write_dataset(const std::string& path, const DomainDataset& ds) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw DataError("write_dataset: cannot open " + path);

  json header;
  header["version"] = 1;
  header["dims"] = ds.grid.dims();
  header["r"] = ds.input_dim;
  header["C"] = ds.classes;
  header["n"] = ds.per_domain;
  header["partial"] = ds.partial;
  if (ds.raster_shape.size() == 2) header["raster"] = ds.raster_shape;
  header["provenance"] = ds.provenance.empty() ? json::object() : json::parse(ds.provenance);
  out << header.dump() << "\n";

  for (int t = 0; t < ds.grid.domain_count(); ++t) {
    for (const auto& s : ds.samples[static_cast<std::size_t>(t)]) {
      json line;
      line["t"] = t;
      line["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
      if (s.y == std::floor(s.y) && std::abs(s.y) < 1e15)
        line["y"] = static_cast<long long>(s.y);
      else
        line["y"] = s.y;
      out << line.dump() << "\n";
    }
  }
  if (!out) throw DataError("write_dataset: write failed for " + path);
}

DomainDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_dataset: cannot open " + path);

  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << path << ": line " << lineno << ": " << what;
    throw ParseError(os.str());
  };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header");
  }
  lineno = 1;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (!header.contains("version")) fail("header missing version");
  if (header["version"].get<int>() != 1) {
    std::ostringstream os;
    os << path << ": unsupported dataset version " << header["version"].dump();
    throw VersionError(os.str());
  }

  DomainDataset ds;
  try {
    ds.grid = DomainGrid(header.at("dims").get<std::vector<int>>());
    ds.input_dim = header.at("r").get<int>();
    ds.classes = header.at("C").get<int>();
    ds.per_domain = header.at("n").get<int>();
    ds.partial = header.value("partial", false);
    if (header.contains("raster")) ds.raster_shape = header["raster"].get<std::vector<int>>();
    ds.provenance = header.value("provenance", json::object()).dump();
  } catch (const json::exception& e) {
    fail(std::string("bad header field: ") + e.what());
  }
  ds.samples.resize(static_cast<std::size_t>(ds.grid.domain_count()));

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("bad sample: ") + e.what());
    }
    try {
      const int t = rec.at("t").get<int>();
      if (t < 0 || t >= ds.grid.domain_count()) fail("flat index outside grid");
      const auto xs = rec.at("x").get<std::vector<double>>();
      if (static_cast<int>(xs.size()) != ds.input_dim) fail("sample width mismatch");
      Sample s;
      s.x = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
      s.y = rec.at("y").get<double>();
      ds.samples[static_cast<std::size_t>(t)].push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(std::string("bad sample field: ") + e.what());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace zsda

#include "zsda/serialize.hpp"

#include <fstream>

namespace zsda {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["shape"] = {m.rows(), m.cols()};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2) throw ParseError("matrix: shape must have two entries");
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw ParseError("matrix: data length does not match shape");
  Eigen::MatrixXd m(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j;
  j["shape"] = {v.size()};
  j["data"] = std::vector<double>(v.data(), v.data() + v.size());
  return j;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.at("data").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw ParseError("unknown activation: " + name);
}

}  // namespace

json net_to_json(const RepresentationNet& net) {
  json j;
  j["widths"] = net.widths;
  json acts = json::array();
  for (Activation a : net.hidden_acts) acts.push_back(activation_name(a));
  j["activations"] = acts;
  json layers = json::array();
  for (int l = 0; l < net.layer_count(); ++l)
    layers.push_back({{"W", matrix_to_json(net.weights[static_cast<std::size_t>(l)])},
                      {"b", vector_to_json(net.biases[static_cast<std::size_t>(l)])}});
  j["layers"] = layers;
  return j;
}

RepresentationNet net_from_json(const json& j) {
  std::vector<Activation> acts;
  for (const auto& name : j.at("activations")) acts.push_back(activation_from_name(name));
  RepresentationNet net = RepresentationNet::make(j.at("widths").get<std::vector<int>>(), acts);
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != net.layer_count())
    throw ParseError("net: layer count mismatch");
  for (int l = 0; l < net.layer_count(); ++l) {
    net.weights[static_cast<std::size_t>(l)] = matrix_from_json(layers[static_cast<std::size_t>(l)].at("W"));
    net.biases[static_cast<std::size_t>(l)] = vector_from_json(layers[static_cast<std::size_t>(l)].at("b"));
  }
  net.validate();
  return net;
}

json factors_to_json(const CPFactors& f) {
  json j;
  j["rank"] = f.rank;
  j["dims"] = f.grid.dims();
  j["width"] = f.width;
  json terms = json::array();
  for (const auto& modes : f.factors) {
    json term = json::array();
    for (const auto& m : modes) term.push_back(matrix_to_json(m));
    terms.push_back(term);
  }
  j["factors"] = terms;
  return j;
}

CPFactors factors_from_json(const json& j) {
  DomainGrid grid(j.at("dims").get<std::vector<int>>());
  CPFactors f = CPFactors::zeros(j.at("rank").get<int>(), grid, j.at("width").get<int>());
  const auto& terms = j.at("factors");
  if (static_cast<int>(terms.size()) != f.rank) throw ParseError("factors: rank mismatch");
  for (int k = 0; k < f.rank; ++k) {
    const auto& term = terms[static_cast<std::size_t>(k)];
    if (static_cast<int>(term.size()) != grid.mode_count())
      throw ParseError("factors: mode count mismatch");
    for (int m = 0; m < grid.mode_count(); ++m)
      f.factor(k, m) = matrix_from_json(term[static_cast<std::size_t>(m)]);
  }
  f.validate();
  return f;
}

json bank_to_json(const HeadBank& bank) {
  json j;
  j["dims"] = bank.grid.dims();
  j["rep_dim"] = bank.rep_dim;
  j["classes"] = bank.classes;
  std::visit(
      [&](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, FreeHeads>) {
          j["variant"] = "free";
          j["domains"] = payload.domains;
          json heads = json::array();
          for (const auto& h : payload.heads) heads.push_back(matrix_to_json(h));
          j["heads"] = heads;
        } else if constexpr (std::is_same_v<T, FactorizedHeads>) {
          j["variant"] = "factorized";
          j["factors"] = factors_to_json(payload.factors);
        } else if constexpr (std::is_same_v<T, AdditiveHeads>) {
          j["variant"] = "additive";
          j["shared"] = vector_to_json(payload.shared);
          json modes = json::array();
          for (const auto& b : payload.per_mode) modes.push_back(matrix_to_json(b));
          j["per_mode"] = modes;
        } else if constexpr (std::is_same_v<T, SharedHead>) {
          j["variant"] = "shared_only";
          j["head"] = matrix_to_json(payload.head);
        } else {
          j["variant"] = "descriptor";
          j["basis"] = matrix_to_json(payload.basis);
          j["coeff"] = matrix_to_json(payload.coeff);
        }
      },
      bank.payload);
  return j;
}

HeadBank bank_from_json(const json& j) {
  DomainGrid grid(j.at("dims").get<std::vector<int>>());
  const int rep_dim = j.at("rep_dim").get<int>();
  const int classes = j.at("classes").get<int>();
  const std::string variant = j.at("variant").get<std::string>();
  HeadBank bank;
  if (variant == "free") {
    bank = HeadBank::make_free(grid, rep_dim, classes, j.at("domains").get<std::vector<int>>());
    auto& free = std::get<FreeHeads>(bank.payload);
    const auto& heads = j.at("heads");
    if (heads.size() != free.heads.size()) throw ParseError("bank: head count mismatch");
    for (std::size_t i = 0; i < free.heads.size(); ++i)
      free.heads[i] = matrix_from_json(heads[i]);
  } else if (variant == "factorized") {
    bank = HeadBank{grid, rep_dim, classes, FactorizedHeads{factors_from_json(j.at("factors"))}};
  } else if (variant == "additive") {
    bank = HeadBank::make_additive(grid, rep_dim, classes);
    auto& add = std::get<AdditiveHeads>(bank.payload);
    add.shared = vector_from_json(j.at("shared"));
    const auto& modes = j.at("per_mode");
    if (static_cast<int>(modes.size()) != grid.mode_count())
      throw ParseError("bank: per-mode count mismatch");
    for (int m = 0; m < grid.mode_count(); ++m)
      add.per_mode[static_cast<std::size_t>(m)] = matrix_from_json(modes[static_cast<std::size_t>(m)]);
  } else if (variant == "shared_only") {
    bank = HeadBank::make_shared(grid, rep_dim, classes);
    std::get<SharedHead>(bank.payload).head = matrix_from_json(j.at("head"));
  } else if (variant == "descriptor") {
    bank = HeadBank::make_descriptor(grid, rep_dim, classes);
    auto& d = std::get<DescriptorHeads>(bank.payload);
    d.basis = matrix_from_json(j.at("basis"));
    d.coeff = matrix_from_json(j.at("coeff"));
  } else {
    throw ParseError("bank: unknown variant " + variant);
  }
  bank.validate();
  return bank;
}

namespace {

json loss_to_json(const LossSpec& spec) {
  json j;
  j["kind"] = spec.kind == LossKind::Squared    ? "squared"
              : spec.kind == LossKind::Logistic ? "logistic"
                                                : "softmax";
  j["classes"] = spec.classes;
  return j;
}

LossSpec loss_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  LossSpec spec;
  spec.classes = j.at("classes").get<int>();
  if (kind == "squared")
    spec.kind = LossKind::Squared;
  else if (kind == "logistic")
    spec.kind = LossKind::Logistic;
  else if (kind == "softmax")
    spec.kind = LossKind::SoftmaxCrossEntropy;
  else
    throw ParseError("unknown loss kind: " + kind);
  return spec;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model) {
  json j;
  j["version"] = 1;
  j["kind"] = "checkpoint";
  j["dims"] = model.mask.grid.dims();
  j["loss"] = loss_to_json(model.loss);
  j["mask"] = model.mask.seen;
  j["net"] = net_to_json(model.model.net);
  j["bank"] = bank_to_json(model.model.bank);
  j["is_two_stage"] = model.is_two_stage;
  if (model.is_two_stage) {
    j["stage2_residual_l1"] = model.stage2_residual_l1;
    j["stage1_heads"] = matrix_to_json(model.stage1_heads);
    j["completion_fully_identified"] = model.completion_fully_identified;
    j["completion_converged"] = model.completion_converged;
    j["completion_objective_l2"] = model.completion_objective_l2;
  }
  j["early_stopped"] = model.early_stopped;
  j["iterations_run"] = model.iterations_run;
  j["warnings"] = model.warnings;
  if (!model.config_echo.empty()) j["config_echo"] = json::parse(model.config_echo);

  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("version") || !j.contains("kind")) throw ParseError(path + ": missing header fields");
  if (j["version"].get<int>() != 1)
    throw VersionError(path + ": unsupported checkpoint version " + j["version"].dump());
  if (j["kind"].get<std::string>() != "checkpoint")
    throw ParseError(path + ": not a checkpoint file");

  TrainedModel model;
  model.mask.grid = DomainGrid(j.at("dims").get<std::vector<int>>());
  model.mask.seen = j.at("mask").get<std::vector<int>>();
  model.mask.validate();
  model.loss = loss_from_json(j.at("loss"));
  model.model.net = net_from_json(j.at("net"));
  model.model.bank = bank_from_json(j.at("bank"));
  model.is_two_stage = j.value("is_two_stage", false);
  if (model.is_two_stage) {
    model.stage2_residual_l1 = j.at("stage2_residual_l1").get<double>();
    model.stage1_heads = matrix_from_json(j.at("stage1_heads"));
    model.completion_fully_identified = j.value("completion_fully_identified", true);
    model.completion_converged = j.value("completion_converged", true);
    model.completion_objective_l2 = j.value("completion_objective_l2", 0.0);
  }
  model.early_stopped = j.value("early_stopped", false);
  model.iterations_run = j.value("iterations_run", 0);
  model.warnings = j.value("warnings", std::vector<std::string>{});
  if (j.contains("config_echo")) model.config_echo = j["config_echo"].dump();
  return model;
}

void write_head_tensor(const std::string& path, const HeadTensor& heads,
                       const std::vector<int>* mask) {
  heads.validate();
  json j;
  j["version"] = 1;
  j["kind"] = "head_tensor";
  j["dims"] = heads.grid.dims();
  j["width"] = heads.width;
  j["values"] = matrix_to_json(heads.values);
  if (mask != nullptr) j["mask"] = *mask;
  std::ofstream out(path);
  if (!out) throw DataError("write_head_tensor: cannot open " + path);
  out << j.dump() << "\n";
}

std::pair<HeadTensor, std::vector<int>> read_head_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_head_tensor: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("version", 0) != 1)
    throw VersionError(path + ": unsupported head-tensor version");
  HeadTensor heads;
  heads.grid = DomainGrid(j.at("dims").get<std::vector<int>>());
  heads.width = j.at("width").get<int>();
  heads.values = matrix_from_json(j.at("values"));
  heads.validate();
  std::vector<int> mask;
  if (j.contains("mask")) mask = j["mask"].get<std::vector<int>>();
  return {std::move(heads), std::move(mask)};
}

void write_factors(const std::string& path, const CPFactors& factors) {
  factors.validate();
  json j;
  j["version"] = 1;
  j["kind"] = "cp_factors";
  j.update(factors_to_json(factors));
  std::ofstream out(path);
  if (!out) throw DataError("write_factors: cannot open " + path);
  out << j.dump() << "\n";
}

CPFactors read_factors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_factors: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("version", 0) != 1) throw VersionError(path + ": unsupported factors version");
  return factors_from_json(j);
}

void save_oracle(const std::string& path, const PlantedModel& oracle) {
  json j;
  j["version"] = 1;
  j["kind"] = "oracle";
  j["net"] = net_to_json(oracle.net);
  j["factors"] = factors_to_json(oracle.factors);
  j["classes"] = oracle.classes;
  j["link"] = {{"kind", oracle.link.kind == LinkKind::Gaussian   ? "gaussian"
                        : oracle.link.kind == LinkKind::Logistic ? "logistic"
                                                                 : "softmax"},
               {"noise_sigma", oracle.link.noise_sigma}};
  j["seed"] = oracle.seed;
  std::ofstream out(path);
  if (!out) throw DataError("save_oracle: cannot open " + path);
  out << j.dump() << "\n";
}

PlantedModel load_oracle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_oracle: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("version", 0) != 1) throw VersionError(path + ": unsupported oracle version");
  PlantedModel oracle;
  oracle.net = net_from_json(j.at("net"));
  oracle.factors = factors_from_json(j.at("factors"));
  oracle.classes = j.at("classes").get<int>();
  const std::string kind = j.at("link").at("kind").get<std::string>();
  oracle.link.kind = kind == "gaussian"   ? LinkKind::Gaussian
                     : kind == "logistic" ? LinkKind::Logistic
                                          : LinkKind::Softmax;
  oracle.link.noise_sigma = j.at("link").at("noise_sigma").get<double>();
  oracle.seed = j.value("seed", 0ULL);
  return oracle;
}

}  // namespace zsda

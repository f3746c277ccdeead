#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zsda/evalharness.hpp"
#include "zsda/rng.hpp"
#include "zsda/serialize.hpp"

using namespace zsda;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("serialize") {

TEST_CASE("matrix json carries shape and round-trips bit-exactly") {
  Eigen::MatrixXd m(2, 3);
  m << 1.0, -0.5, 1e-17, 3.25, 1.0 / 3.0, -2e300;
  const auto j = matrix_to_json(m);
  CHECK(j.at("shape")[0] == 2);
  CHECK(j.at("shape")[1] == 3);
  const Eigen::MatrixXd back = matrix_from_json(j);
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round trip preserves the model bit for bit") {
  DomainGrid grid({2, 3});
  const PlantedModel planted = plant_model(grid, 4, 3, 1, 2, {LinkKind::Logistic, 0.0}, 17);
  const DomainDataset ds = planted_dataset(planted, 40, 18);
  const ObservationMask mask = sample_mask(grid, 4, 19);
  ArchConfig arch;
  arch.hidden = {6};
  arch.rep_dim = 3;
  arch.rank = 2;
  TrainConfig cfg;
  cfg.max_iters = 60;
  cfg.seed = 20;
  CompletionConfig ccfg;
  ccfg.rank = 2;
  ccfg.restarts = 2;
  const TrainedModel model = two_stage(ds, mask, arch, cfg, ccfg);

  const std::string path = temp_path("zsda_ckpt.json");
  save_checkpoint(path, model);
  const TrainedModel back = load_checkpoint(path);
  CHECK((pack_params(back.model) - pack_params(model.model)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.mask.seen == model.mask.seen);
  CHECK(back.loss.kind == model.loss.kind);
  CHECK(back.is_two_stage);
  CHECK(back.stage2_residual_l1 == model.stage2_residual_l1);
  CHECK((back.stage1_heads - model.stage1_heads).cwiseAbs().maxCoeff() == 0.0);

  // The reloaded model evaluates identically.
  const DomainDataset test = planted_dataset(planted, 30, 21);
  const auto ta = evaluate(model, test);
  const auto tb = evaluate(back, test);
  for (std::size_t i = 0; i < ta.size(); ++i)
    CHECK(ta[i].accuracy_or_loss == tb[i].accuracy_or_loss);
  std::remove(path.c_str());
}

TEST_CASE("every bank variant survives a checkpoint round trip") {
  DomainGrid grid({2, 2});
  const PlantedModel planted = plant_model(grid, 3, 2, 1, 1, {LinkKind::Logistic, 0.0}, 23);
  const DomainDataset ds = planted_dataset(planted, 30, 24);
  const ObservationMask mask = sample_mask(grid, 4, 25);
  ArchConfig arch;
  arch.hidden = {4};
  arch.rep_dim = 2;
  TrainConfig cfg;
  cfg.max_iters = 20;
  cfg.seed = 26;
  for (BankVariant variant : {BankVariant::Factorized, BankVariant::Additive,
                              BankVariant::SharedOnly, BankVariant::Descriptor}) {
    const TrainedModel model = train_end_to_end(ds, mask, arch, variant, cfg);
    const std::string path = temp_path("zsda_ckpt_variant.json");
    save_checkpoint(path, model);
    const TrainedModel back = load_checkpoint(path);
    CHECK(back.model.bank.variant() == variant);
    CHECK((pack_params(back.model) - pack_params(model.model)).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
  }
  const TrainedModel erm = train_erm(ds, mask, arch, cfg);
  const std::string path = temp_path("zsda_ckpt_free.json");
  save_checkpoint(path, erm);
  const TrainedModel back = load_checkpoint(path);
  CHECK(back.model.bank.variant() == BankVariant::Free);
  CHECK((pack_params(back.model) - pack_params(erm.model)).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("head tensor and factors files round trip") {
  DomainGrid grid({2, 3});
  CPFactors f = CPFactors::zeros(2, grid, 3);
  auto rng = make_rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 2; ++k)
    for (int m = 0; m < 2; ++m)
      for (Eigen::Index i = 0; i < f.factor(k, m).size(); ++i)
        *(f.factor(k, m).data() + i) = gauss(rng);

  const std::string fpath = temp_path("zsda_factors.json");
  write_factors(fpath, f);
  const CPFactors fback = read_factors(fpath);
  CHECK((cp_materialize(fback).values - cp_materialize(f).values).cwiseAbs().maxCoeff() == 0.0);
  std::remove(fpath.c_str());

  const HeadTensor heads = cp_materialize(f);
  std::vector<int> mask = {0, 2, 5};
  const std::string hpath = temp_path("zsda_heads.json");
  write_head_tensor(hpath, heads, &mask);
  const auto [hback, mback] = read_head_tensor(hpath);
  CHECK((hback.values - heads.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mback == mask);
  std::remove(hpath.c_str());
}

TEST_CASE("oracle round trip reproduces heads and sampling") {
  DomainGrid grid({2, 2});
  const PlantedModel oracle = plant_model(grid, 4, 3, 3, 2, {LinkKind::Softmax, 0.0}, 37);
  const std::string path = temp_path("zsda_oracle.json");
  save_oracle(path, oracle);
  const PlantedModel back = load_oracle(path);
  for (int t = 0; t < grid.domain_count(); ++t)
    CHECK((back.head_for(grid.multi_index(t)) - oracle.head_for(grid.multi_index(t)))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  const auto sa = sample_domain_data(oracle, {1, 0}, 20, 5);
  const auto sb = sample_domain_data(back, {1, 0}, 20, 5);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].y == sb[i].y);
    CHECK((sa[i].x - sb[i].x).cwiseAbs().maxCoeff() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("corrupted and wrong-version files are rejected") {
  const std::string path = temp_path("zsda_corrupt.json");
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  {
    std::ofstream out(path);
    out << R"({"version":9,"kind":"checkpoint"})";
  }
  CHECK_THROWS_AS(load_checkpoint(path), VersionError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("zsda_missing_file.json")), DataError);
  std::remove(path.c_str());
}

}  // TEST_SUITE

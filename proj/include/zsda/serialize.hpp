#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsda/pipeline.hpp"

namespace zsda {

// Parameter arrays travel as {"shape":[rows,cols],"data":[row-major]}.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json net_to_json(const RepresentationNet& net);
RepresentationNet net_from_json(const nlohmann::json& j);

nlohmann::json factors_to_json(const CPFactors& f);
CPFactors factors_from_json(const nlohmann::json& j);

nlohmann::json bank_to_json(const HeadBank& bank);
HeadBank bank_from_json(const nlohmann::json& j);

/// Self-describing single-file container for a trained model: grid, loss,
/// mask, representation, bank variant with every parameter array, and the
/// two-stage bookkeeping needed by the bound diagnostic.
void save_checkpoint(const std::string& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::string& path);

void write_head_tensor(const std::string& path, const HeadTensor& heads,
                       const std::vector<int>* mask = nullptr);
std::pair<HeadTensor, std::vector<int>> read_head_tensor(const std::string& path);

void write_factors(const std::string& path, const CPFactors& factors);
CPFactors read_factors(const std::string& path);

/// Planted ground truth, persisted so evaluation runs can compute oracle
/// quantities (excess risk) without regenerating the model.
void save_oracle(const std::string& path, const PlantedModel& oracle);
PlantedModel load_oracle(const std::string& path);

}  // namespace zsda

#pragma once

#include <string>

#include "fusion/fusionnet.hpp"
#include "fusion/heads.hpp"
#include "fusion/train.hpp"
#include "json.hpp"

namespace fusion {

// Everything one run needs: task selector, model shape, training knobs.
struct ExperimentConfig {
  std::string task = "mrc";  // "mrc" or "nli"
  ModelConfig model;
  NliConfig nli;
  TrainConfig train;

  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json nli_config_to_json(const NliConfig& cfg);
NliConfig nli_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

ExperimentConfig load_experiment_config(const std::string& path);

// "train.epochs=5" — the dotted path must already exist in the document.
void apply_config_override(nlohmann::json& doc, const std::string& assignment);

// Toy-dimension defaults (word 16, ctx 16, hidden 32, k 32).
ExperimentConfig default_toy_config(const std::string& task = "mrc");

}  // namespace fusion

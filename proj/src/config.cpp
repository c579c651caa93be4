#include "fusion/config.hpp"

#include <fstream>
#include <sstream>

namespace fusion {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (task != "mrc" && task != "nli") throw ConfigError("task must be 'mrc' or 'nli'");
  if (task == "mrc")
    model.validate();
  else
    nli.validate();
  if (train.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (train.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (train.opt.lr < 0) throw ConfigError("lr must be >= 0");
}

namespace {

json input_config_to_json(const InputConfig& c) {
  return json{{"word_dim", c.word_dim},
              {"ctx_dim", c.ctx_dim},
              {"pos_dim", c.pos_dim},
              {"ner_dim", c.ner_dim},
              {"use_tf", c.use_tf},
              {"use_em", c.use_em},
              {"use_word_fusion", c.use_word_fusion},
              {"finetune_top_n", c.finetune_top_n}};
}

InputConfig input_config_from_json(const json& j) {
  InputConfig c;
  c.word_dim = j.value("word_dim", c.word_dim);
  c.ctx_dim = j.value("ctx_dim", c.ctx_dim);
  c.pos_dim = j.value("pos_dim", c.pos_dim);
  c.ner_dim = j.value("ner_dim", c.ner_dim);
  c.use_tf = j.value("use_tf", c.use_tf);
  c.use_em = j.value("use_em", c.use_em);
  c.use_word_fusion = j.value("use_word_fusion", c.use_word_fusion);
  c.finetune_top_n = j.value("finetune_top_n", c.finetune_top_n);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"lr", c.opt.lr},       {"beta1", c.opt.beta1}, {"beta2", c.opt.beta2},
              {"eps", c.opt.eps},     {"batch_size", c.batch_size},
              {"epochs", c.epochs},   {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.opt.lr = j.value("lr", c.opt.lr);
  c.opt.beta1 = j.value("beta1", c.opt.beta1);
  c.opt.beta2 = j.value("beta2", c.opt.beta2);
  c.opt.eps = j.value("eps", c.opt.eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"input", input_config_to_json(cfg.input)},
              {"hidden", cfg.hidden},
              {"att_k", cfg.att_k},
              {"scorer", scorer_name(cfg.scorer)},
              {"fusion_mode", fusion_mode_name(cfg.fusion_mode)},
              {"self_mode", self_mode_name(cfg.self_mode)},
              {"share_cq", cfg.share_cq},
              {"dropout", cfg.dropout},
              {"span_max_len", cfg.span_max_len},
              {"paper_dims", cfg.paper_dims},
              {"appendix_self_how", cfg.appendix_self_how}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  if (j.contains("input")) cfg.input = input_config_from_json(j.at("input"));
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.att_k = j.value("att_k", cfg.att_k);
  if (j.contains("scorer")) cfg.scorer = scorer_from_name(j.at("scorer").get<std::string>());
  if (j.contains("fusion_mode"))
    cfg.fusion_mode = fusion_mode_from_name(j.at("fusion_mode").get<std::string>());
  if (j.contains("self_mode"))
    cfg.self_mode = self_mode_from_name(j.at("self_mode").get<std::string>());
  cfg.share_cq = j.value("share_cq", cfg.share_cq);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.span_max_len = j.value("span_max_len", cfg.span_max_len);
  cfg.paper_dims = j.value("paper_dims", cfg.paper_dims);
  cfg.appendix_self_how = j.value("appendix_self_how", cfg.appendix_self_how);
  if (cfg.paper_dims) apply_paper_dims(cfg);
  return cfg;
}

json nli_config_to_json(const NliConfig& cfg) {
  return json{{"input", input_config_to_json(cfg.input)},
              {"hidden", cfg.hidden},
              {"variant", nli_variant_name(cfg.variant)},
              {"scorer", scorer_name(cfg.scorer)},
              {"dropout", cfg.dropout},
              {"paper_dims", cfg.paper_dims}};
}

NliConfig nli_config_from_json(const json& j) {
  NliConfig cfg;
  if (j.contains("input")) cfg.input = input_config_from_json(j.at("input"));
  cfg.hidden = j.value("hidden", cfg.hidden);
  if (j.contains("variant"))
    cfg.variant = nli_variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("scorer")) cfg.scorer = scorer_from_name(j.at("scorer").get<std::string>());
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.paper_dims = j.value("paper_dims", cfg.paper_dims);
  if (cfg.paper_dims) apply_paper_dims(cfg);
  return cfg;
}

json experiment_to_json(const ExperimentConfig& cfg) {
  return json{{"task", cfg.task},
              {"model", model_config_to_json(cfg.model)},
              {"nli", nli_config_to_json(cfg.nli)},
              {"train", train_config_to_json(cfg.train)}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig cfg = default_toy_config();
  cfg.task = j.value("task", cfg.task);
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("nli")) cfg.nli = nli_config_from_json(j.at("nli"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad config " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

void apply_config_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &doc;
  std::istringstream parts(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(parts, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("empty override path");
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->contains(keys[i]))
      throw ConfigError("override path not in config: " + path);
    node = &(*node)[keys[i]];
  }
  const std::string& leaf = keys.back();
  if (!node->contains(leaf)) throw ConfigError("override path not in config: " + path);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain strings need no quoting
  }
  (*node)[leaf] = parsed;
}

ExperimentConfig default_toy_config(const std::string& task) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.model.input.word_dim = 16;
  cfg.model.input.ctx_dim = 16;
  cfg.model.input.pos_dim = 4;
  cfg.model.input.ner_dim = 4;
  cfg.model.hidden = 32;
  cfg.model.att_k = 32;
  cfg.model.dropout = 0.2;
  cfg.nli.input.word_dim = 16;
  cfg.nli.input.ctx_dim = 16;
  cfg.nli.input.pos_dim = 0;  // the pair task ships no tags
  cfg.nli.input.ner_dim = 0;
  cfg.nli.hidden = 32;
  cfg.nli.dropout = 0.15;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 32;
  return cfg;
}

}  // namespace fusion

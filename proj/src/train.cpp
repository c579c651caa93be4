#include "fusion/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "fusion/config.hpp"
#include "json.hpp"

namespace fusion {

using nlohmann::json;

// ---------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed, std::uint64_t key) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  Tensor t = Tensor::zeros(shape);
  Rng rng(seed, key);
  const real_t kept = static_cast<real_t>(1.0 / (1.0 - rate));
  for (auto& v : t.value()) v = rng.next_double() < rate ? real_t(0) : kept;
  return t;
}

DropoutContext::DropoutContext(double rate, std::uint64_t seed, std::uint64_t salt)
    : active_(rate > 0.0), rate_(rate), seed_(seed), salt_(salt) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
}

Tensor DropoutContext::mask(const std::string& key, int dim) {
  auto it = cache_.find(key);
  if (it != cache_.end()) {
    if (it->second.dim(0) != dim)
      throw ContractError("dropout site '" + key + "' used with two different widths");
    return it->second;
  }
  Tensor m = dropout_mask({dim}, rate_, seed_, salt_ ^ Rng::stream_key(key.c_str()));
  cache_.emplace(key, m);
  return m;
}

Tensor DropoutContext::apply(Graph& g, const Tensor& x, const std::string& key) {
  if (!active_) return x;
  ++applied_[key];
  if (x.rank() == 2) return g.mul_rowvec(x, mask(key, x.cols()));
  return g.mul(x, mask(key, x.dim(0)));
}

// ---------------------------------------------------------------------
// Adamax
// ---------------------------------------------------------------------

Adamax::Adamax(std::vector<Tensor> params, AdamaxConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  u_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), real_t(0));
    u_.emplace_back(p.size(), real_t(0));
  }
}

void Adamax::step() {
  ++t_;
  const double correction = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const real_t lr_t = static_cast<real_t>(cfg_.lr / correction);
  const real_t b1 = static_cast<real_t>(cfg_.beta1);
  const real_t b2 = static_cast<real_t>(cfg_.beta2);
  const real_t eps = static_cast<real_t>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto& m = m_[i];
    auto& u = u_[i];
    for (std::size_t c = 0; c < p.size(); ++c) {
      const real_t g = p.grad_at(c);
      m[c] = b1 * m[c] + (real_t(1) - b1) * g;
      u[c] = std::max(b2 * u[c], std::abs(g));
      p.value()[c] -= lr_t * m[c] / (u[c] + eps);
    }
  }
}

void Adamax::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

Adamax::State Adamax::snapshot() const { return State{t_, m_, u_}; }

void Adamax::restore(const State& s) {
  if (s.m.size() != params_.size() || s.u.size() != params_.size())
    throw ValidationError("optimizer state does not match parameter count");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (s.m[i].size() != params_[i].size() || s.u[i].size() != params_[i].size())
      throw ValidationError("optimizer state shape mismatch at parameter " +
                            std::to_string(i));
  t_ = s.t;
  m_ = s.m;
  u_ = s.u;
}

// ---------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------

void MrcModel::visit(const ParamVisitor& fn) {
  net.visit("net", fn);
  head.visit("head", fn);
}

std::vector<Tensor> MrcModel::trainable_tensors() {
  std::vector<Tensor> out;
  visit([&out](const std::string&, Tensor& t) {
    if (t.requires_grad()) out.push_back(t);
  });
  return out;
}

MrcModel make_mrc_model(const ModelConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                        Vocab ner_vocab, std::uint64_t seed) {
  MrcModel model;
  model.cfg = cfg;
  model.net = make_fusionnet_params(cfg, std::move(word_vocab), std::move(pos_vocab),
                                    std::move(ner_vocab), seed);
  model.head = make_span_head(cfg.hidden, seed, "head");
  return model;
}

MrcModel make_mrc_model(const ModelConfig& cfg, const std::vector<MrcExample>& train,
                        std::uint64_t seed) {
  std::vector<const std::vector<std::string>*> words, questions, pos, ner;
  for (const auto& ex : train) {
    words.push_back(&ex.context_tokens);
    words.push_back(&ex.question_tokens);
    questions.push_back(&ex.question_tokens);
    if (!ex.pos.empty()) pos.push_back(&ex.pos);
    if (!ex.ner.empty()) ner.push_back(&ex.ner);
  }
  MrcModel model = make_mrc_model(cfg, Vocab::build(words), Vocab::build(pos),
                                  Vocab::build(ner), seed);
  set_finetune_top_n(model.net.encoder.words, questions, cfg.input.finetune_top_n);
  return model;
}

void NliModel::visit(const ParamVisitor& fn) { params.visit("nli", fn); }

std::vector<Tensor> NliModel::trainable_tensors() { return params.trainable_tensors(); }

NliModel make_nli_model(const NliConfig& cfg, const std::vector<NliExample>& train,
                        std::uint64_t seed) {
  std::vector<const std::vector<std::string>*> words, hypotheses;
  for (const auto& ex : train) {
    words.push_back(&ex.premise_tokens);
    words.push_back(&ex.hypothesis_tokens);
    hypotheses.push_back(&ex.hypothesis_tokens);
  }
  NliModel model;
  model.cfg = cfg;
  model.params = make_nli_params(cfg, Vocab::build(words), Vocab::build({}), Vocab::build({}),
                                 seed);
  set_finetune_top_n(model.params.encoder.words, hypotheses, cfg.input.finetune_top_n);
  return model;
}

SpanDistribution mrc_span_distribution(Graph& g, const MrcModel& model, const MrcExample& ex,
                                       DropoutContext& drop, FusionState* state_out) {
  FusionState st = fusionnet_forward(g, model.net, model.cfg, ex, drop);
  SpanDistribution dist = span_head_forward(g, model.head, st.u_c, st.u_q, drop);
  if (state_out) *state_out = std::move(st);
  return dist;
}

std::pair<int, int> mrc_predict(const MrcModel& model, const MrcExample& ex) {
  Graph g;
  DropoutContext off;
  SpanDistribution dist = mrc_span_distribution(g, model, ex, off);
  return decode_span(dist.p_start.value(), dist.p_end.value(), model.cfg.span_max_len);
}

MrcEval evaluate_mrc(const MrcModel& model, const std::vector<MrcExample>& data) {
  if (data.empty()) return {};
  MrcEval total;
  for (const auto& ex : data) {
    const auto [s, e] = mrc_predict(model, ex);
    const EmF1 r = em_f1(span_text(ex.context_tokens, s, e), ex.answers);
    total.em += r.em;
    total.f1 += r.f1;
  }
  total.em /= static_cast<double>(data.size());
  total.f1 /= static_cast<double>(data.size());
  return total;
}

double evaluate_nli(const NliModel& model, const std::vector<NliExample>& data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto& ex : data) {
    Graph g;
    DropoutContext off;
    NliState st = nli_forward(g, model.params, model.cfg, ex, off);
    if (nli_predict(st.logits.value()) == ex.label_index()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, Rng::stream_key("shuffle") + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::uint64_t forward_salt(int epoch, std::size_t index) {
  std::uint64_t x = (static_cast<std::uint64_t>(static_cast<unsigned>(epoch)) << 32) ^
                    static_cast<std::uint64_t>(index);
  return Rng::splitmix64(x);
}

void scale_grads(std::vector<Tensor>& params, real_t factor) {
  for (auto& p : params) {
    if (!p.grad_allocated()) continue;
    for (auto& g : p.grad()) g *= factor;
  }
}

template <typename Example, typename LossFn>
double run_epoch(std::vector<Tensor>& params, const std::vector<Example>& data, Adamax& opt,
                 const TrainConfig& cfg, int epoch, LossFn&& loss_of) {
  if (data.empty()) return 0.0;
  const auto order = shuffled_order(data.size(), cfg.seed, epoch);
  double total = 0.0;
  int in_batch = 0;
  opt.zero_grads();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double loss = loss_of(data[order[i]], forward_salt(epoch, i));
    if (!std::isfinite(loss)) return std::numeric_limits<double>::quiet_NaN();
    total += loss;
    ++in_batch;
    if (in_batch == cfg.batch_size || i + 1 == order.size()) {
      scale_grads(params, real_t(1) / static_cast<real_t>(in_batch));
      opt.step();
      opt.zero_grads();
      in_batch = 0;
    }
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

double train_epoch_mrc(MrcModel& model, const std::vector<MrcExample>& data, Adamax& opt,
                       const TrainConfig& cfg, int epoch) {
  auto params = model.trainable_tensors();
  return run_epoch(params, data, opt, cfg, epoch,
                   [&](const MrcExample& ex, std::uint64_t salt) {
                     DropoutContext drop(model.cfg.dropout, cfg.seed, salt);
                     Graph g;
                     SpanDistribution dist = mrc_span_distribution(g, model, ex, drop);
                     Tensor loss = span_loss(g, dist, ex.answer_start, ex.answer_end);
                     const double v = loss.item();
                     if (std::isfinite(v)) g.backward(loss);
                     return v;
                   });
}

double train_epoch_nli(NliModel& model, const std::vector<NliExample>& data, Adamax& opt,
                       const TrainConfig& cfg, int epoch) {
  auto params = model.trainable_tensors();
  return run_epoch(params, data, opt, cfg, epoch,
                   [&](const NliExample& ex, std::uint64_t salt) {
                     DropoutContext drop(model.cfg.dropout, cfg.seed, salt);
                     Graph g;
                     NliState st = nli_forward(g, model.params, model.cfg, ex, drop);
                     Tensor loss = nli_loss(g, st.logits, ex.label_index());
                     const double v = loss.item();
                     if (std::isfinite(v)) g.backward(loss);
                     return v;
                   });
}

std::pair<int, int> ensemble_predict(const std::vector<const MrcModel*>& models,
                                     const MrcExample& ex, Rng& tie_rng) {
  if (models.empty()) throw ContractError("ensemble_predict: no models");
  std::map<std::string, int> votes;                     // ordered: deterministic ties
  std::map<std::string, std::pair<int, int>> spans;
  for (const auto* model : models) {
    const auto span = mrc_predict(*model, ex);
    const std::string text = span_text(ex.context_tokens, span.first, span.second);
    ++votes[text];
    spans.emplace(text, span);
  }
  int best = 0;
  for (const auto& [text, count] : votes) best = std::max(best, count);
  std::vector<std::string> tied;
  for (const auto& [text, count] : votes)
    if (count == best) tied.push_back(text);
  const std::string& winner =
      tied.size() == 1 ? tied[0]
                       : tied[static_cast<std::size_t>(tie_rng.next_below(tied.size()))];
  return spans.at(winner);
}

// ---------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian");

struct BlobWriter {
  std::vector<double> data;
  json directory = json::array();

  void add(const std::string& name, const Shape& shape, const std::vector<real_t>& values) {
    directory.push_back(json{{"name", name},
                             {"shape", shape},
                             {"offset", data.size() * sizeof(double)},
                             {"length", values.size()}});
    for (real_t v : values) data.push_back(static_cast<double>(v));
  }
};

void write_blob(const std::string& path, const BlobWriter& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint blob: " + path);
  out.write(reinterpret_cast<const char*>(w.data.data()),
            static_cast<std::streamsize>(w.data.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint blob: " + path);
}

std::vector<std::string> vocab_rows(const Vocab& v) {
  std::vector<std::string> rows(static_cast<std::size_t>(v.size()));
  for (const auto& [token, row] : v.index) rows[static_cast<std::size_t>(row)] = token;
  return rows;
}

json encoder_vocab_json(const EncoderParams& enc) {
  json j;
  j["words"] = vocab_rows(enc.words.vocab);
  j["finetune_rows"] = std::vector<int>(enc.words.finetune_rows.begin(),
                                        enc.words.finetune_rows.end());
  if (enc.pos_tags.matrix.defined()) j["pos"] = vocab_rows(enc.pos_tags.vocab);
  if (enc.ner_tags.matrix.defined()) j["ner"] = vocab_rows(enc.ner_tags.vocab);
  return j;
}

template <typename Model>
void save_checkpoint_impl(const std::string& prefix, Model& model, const char* task,
                          const json& config_json, const json& vocab_json, const Adamax* opt,
                          const RngCursor& rng) {
  BlobWriter blob;
  model.visit([&blob](const std::string& name, Tensor& t) {
    blob.add(name, t.shape(), t.value());
  });
  json manifest{{"version", kCheckpointVersion},
                {"task", task},
                {"config", config_json},
                {"vocab", vocab_json},
                {"rng", json{{"seed", rng.seed}, {"epoch", rng.epoch}}}};
  if (opt) {
    const Adamax::State s = opt->snapshot();
    manifest["optimizer"] = json{{"t", s.t}, {"count", s.m.size()}};
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      blob.add("opt.m." + std::to_string(i), {static_cast<int>(s.m[i].size())}, s.m[i]);
      blob.add("opt.u." + std::to_string(i), {static_cast<int>(s.u[i].size())}, s.u[i]);
    }
  }
  manifest["tensors"] = blob.directory;
  write_blob(prefix + ".bin", blob);
  std::ofstream out(prefix + ".json");
  if (!out) throw IoError("cannot write checkpoint manifest: " + prefix + ".json");
  out << manifest.dump(2) << "\n";
}

struct BlobReader {
  std::vector<double> data;
  std::map<std::string, std::pair<Shape, std::pair<std::size_t, std::size_t>>> entries;

  void load(const std::string& prefix, const json& manifest) {
    std::ifstream in(prefix + ".bin", std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint blob: " + prefix + ".bin");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes % sizeof(double) != 0)
      throw ValidationError("checkpoint blob size is not a multiple of 8");
    data.resize(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("failed reading checkpoint blob");
    for (const auto& e : manifest.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t length = e.at("length").get<std::size_t>();
      if (offset % sizeof(double) != 0 || offset / sizeof(double) + length > data.size())
        throw ValidationError("checkpoint entry out of bounds: " + name);
      entries[name] = {shape, {offset / sizeof(double), length}};
    }
  }

  void fill(const std::string& name, Tensor& t) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw ValidationError("checkpoint missing tensor: " + name);
    const auto& [shape, span] = it->second;
    if (shape != t.shape())
      throw ValidationError("checkpoint shape mismatch for " + name + ": stored " +
                            shape_str(shape) + ", expected " + shape_str(t.shape()));
    if (span.second != t.size())
      throw ValidationError("checkpoint length mismatch for " + name);
    for (std::size_t i = 0; i < span.second; ++i)
      t.value()[i] = static_cast<real_t>(data[span.first + i]);
  }

  std::vector<real_t> read_vector(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw ValidationError("checkpoint missing tensor: " + name);
    const auto& span = it->second.second;
    std::vector<real_t> out(span.second);
    for (std::size_t i = 0; i < span.second; ++i)
      out[i] = static_cast<real_t>(data[span.first + i]);
    return out;
  }
};

json read_manifest(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  if (!in) throw IoError("cannot open checkpoint manifest: " + prefix + ".json");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("corrupted checkpoint manifest: " + std::string(e.what()));
  }
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint version " + std::to_string(version) +
                          " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  return manifest;
}

Vocab vocab_from_rows(const std::vector<std::string>& rows) {
  Vocab v;
  for (std::size_t i = 0; i < rows.size(); ++i) v.index[rows[i]] = static_cast<int>(i);
  auto it = v.index.find("<unk>");
  if (it == v.index.end()) throw ValidationError("checkpoint vocab lacks <unk>");
  v.unk = it->second;
  return v;
}

std::optional<Adamax::State> read_optimizer(const json& manifest, const BlobReader& blob) {
  if (!manifest.contains("optimizer") || manifest.at("optimizer").is_null())
    return std::nullopt;
  Adamax::State s;
  s.t = manifest.at("optimizer").at("t").get<long>();
  const auto count = manifest.at("optimizer").at("count").get<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    s.m.push_back(blob.read_vector("opt.m." + std::to_string(i)));
    s.u.push_back(blob.read_vector("opt.u." + std::to_string(i)));
  }
  return s;
}

RngCursor read_rng(const json& manifest) {
  RngCursor rng;
  if (manifest.contains("rng")) {
    rng.seed = manifest.at("rng").value("seed", std::uint64_t(0));
    rng.epoch = manifest.at("rng").value("epoch", 0);
  }
  return rng;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const MrcModel& model, const Adamax* opt,
                     const RngCursor& rng) {
  auto& mutable_model = const_cast<MrcModel&>(model);  // visit is non-const; values untouched
  save_checkpoint_impl(prefix, mutable_model, "mrc", model_config_to_json(model.cfg),
                       encoder_vocab_json(model.net.encoder), opt, rng);
}

void save_checkpoint(const std::string& prefix, const NliModel& model, const Adamax* opt,
                     const RngCursor& rng) {
  auto& mutable_model = const_cast<NliModel&>(model);
  save_checkpoint_impl(prefix, mutable_model, "nli", nli_config_to_json(model.cfg),
                       encoder_vocab_json(model.params.encoder), opt, rng);
}

std::string checkpoint_task(const std::string& prefix) {
  return read_manifest(prefix).value("task", "mrc");
}

LoadedMrc load_mrc_checkpoint(const std::string& prefix) {
  const json manifest = read_manifest(prefix);
  if (manifest.value("task", "") != "mrc")
    throw ValidationError("checkpoint is not an mrc model");
  const ModelConfig cfg = model_config_from_json(manifest.at("config"));
  const json& vocab = manifest.at("vocab");
  Vocab words = vocab_from_rows(vocab.at("words").get<std::vector<std::string>>());
  Vocab pos = vocab.contains("pos")
                  ? vocab_from_rows(vocab.at("pos").get<std::vector<std::string>>())
                  : Vocab::build({});
  Vocab ner = vocab.contains("ner")
                  ? vocab_from_rows(vocab.at("ner").get<std::vector<std::string>>())
                  : Vocab::build({});

  LoadedMrc out{make_mrc_model(cfg, std::move(words), std::move(pos), std::move(ner), 0),
                std::nullopt, read_rng(manifest)};
  for (int row : vocab.at("finetune_rows").get<std::vector<int>>())
    out.model.net.encoder.words.finetune_rows.insert(row);

  BlobReader blob;
  blob.load(prefix, manifest);
  out.model.visit([&blob](const std::string& name, Tensor& t) { blob.fill(name, t); });
  out.opt = read_optimizer(manifest, blob);
  return out;
}

LoadedNli load_nli_checkpoint(const std::string& prefix) {
  const json manifest = read_manifest(prefix);
  if (manifest.value("task", "") != "nli")
    throw ValidationError("checkpoint is not an nli model");
  const NliConfig cfg = nli_config_from_json(manifest.at("config"));
  const json& vocab = manifest.at("vocab");
  Vocab words = vocab_from_rows(vocab.at("words").get<std::vector<std::string>>());

  LoadedNli out;
  out.model.cfg = cfg;
  out.model.params =
      make_nli_params(cfg, std::move(words), Vocab::build({}), Vocab::build({}), 0);
  out.rng = read_rng(manifest);
  for (int row : vocab.at("finetune_rows").get<std::vector<int>>())
    out.model.params.encoder.words.finetune_rows.insert(row);

  BlobReader blob;
  blob.load(prefix, manifest);
  out.model.visit([&blob](const std::string& name, Tensor& t) { blob.fill(name, t); });
  out.opt = read_optimizer(manifest, blob);
  return out;
}

}  // namespace fusion

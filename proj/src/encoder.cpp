#include "fusion/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "fusion/rng.hpp"

namespace fusion {

namespace {
constexpr const char* kUnkToken = "<unk>";
}

int Vocab::lookup(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? unk : it->second;
}

Vocab Vocab::build(const std::vector<const std::vector<std::string>*>& token_seqs) {
  std::vector<std::string> uniq;
  for (const auto* seq : token_seqs)
    for (const auto& t : *seq) uniq.push_back(t);
  uniq.push_back(kUnkToken);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  Vocab v;
  for (std::size_t i = 0; i < uniq.size(); ++i) v.index[uniq[i]] = static_cast<int>(i);
  v.unk = v.index.at(kUnkToken);
  return v;
}

EmbeddingTable make_embedding_table(Vocab vocab, int dim, std::uint64_t seed,
                                    const std::string& scope) {
  if (dim < 1) throw ConfigError("embedding dim must be positive: " + scope);
  if (vocab.size() < 1) throw ConfigError("embedding vocab empty: " + scope);
  EmbeddingTable t;
  t.dim = dim;
  t.matrix = init_param({vocab.size(), dim}, InitScheme::uniform_fan_in, seed,
                        Rng::stream_key(scope.c_str()));
  t.vocab = std::move(vocab);
  return t;
}

EmbeddingTable load_embedding_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table: " + path);
  EmbeddingTable t;
  std::vector<real_t> values;
  std::string line;
  std::size_t line_no = 0;
  int row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<real_t> vec;
    double x;
    while (ls >> x) vec.push_back(static_cast<real_t>(x));
    if (vec.empty())
      throw ValidationError(path + ":" + std::to_string(line_no) + ": no values");
    if (t.dim == 0) t.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != t.dim)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.dim) + " values, got " +
                            std::to_string(vec.size()));
    if (t.vocab.index.count(token))
      throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate token " +
                            token);
    t.vocab.index[token] = row++;
    values.insert(values.end(), vec.begin(), vec.end());
  }
  if (row == 0) throw ValidationError(path + ": empty embedding table");
  if (!t.vocab.index.count(kUnkToken)) {
    t.vocab.index[kUnkToken] = row++;
    values.insert(values.end(), static_cast<std::size_t>(t.dim), real_t(0));
  }
  t.vocab.unk = t.vocab.index.at(kUnkToken);
  t.matrix = Tensor::of({row, t.dim}, std::move(values));
  t.matrix.set_requires_grad(true);
  return t;
}

void save_embedding_table(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding table: " + path);
  out.precision(17);
  std::vector<std::string> by_row(static_cast<std::size_t>(table.vocab.size()));
  for (const auto& [token, row] : table.vocab.index)
    by_row[static_cast<std::size_t>(row)] = token;
  for (int r = 0; r < table.vocab.size(); ++r) {
    out << by_row[static_cast<std::size_t>(r)];
    for (int j = 0; j < table.dim; ++j)
      out << ' ' << table.matrix.at(r, j);
    out << '\n';
  }
}

void set_finetune_top_n(EmbeddingTable& table,
                        const std::vector<const std::vector<std::string>*>& token_seqs, int n) {
  table.finetune_rows.clear();
  if (n <= 0) return;
  std::map<std::string, int> freq;  // ordered: lexicographic tie-break for free
  for (const auto* seq : token_seqs)
    for (const auto& t : *seq) ++freq[t];
  std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [token, count] : ranked) {
    (void)count;
    if (static_cast<int>(table.finetune_rows.size()) >= n) break;
    auto it = table.vocab.index.find(token);
    if (it != table.vocab.index.end()) table.finetune_rows.insert(it->second);
  }
}

Tensor embed_lookup(Graph& g, const std::vector<std::string>& tokens,
                    const EmbeddingTable& table) {
  if (tokens.empty()) throw EmptyInputError("embed_lookup: no tokens");
  if (!table.matrix.defined()) throw ContractError("embed_lookup: empty table");
  std::vector<Tensor> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) {
    const int r = table.vocab.lookup(t);
    rows.push_back(g.lookup_row(table.matrix, r, table.finetune_rows.count(r) > 0));
  }
  return g.stack_rows(rows);
}

void InputConfig::validate() const {
  if (word_dim < 1) throw ConfigError("word_dim must be positive");
  if (ctx_dim < 0 || pos_dim < 0 || ner_dim < 0) throw ConfigError("feature dims must be >= 0");
  if (ctx_dim % 2 != 0) throw ConfigError("ctx_dim must be even (bidirectional halves)");
  if (finetune_top_n < 0) throw ConfigError("finetune_top_n must be >= 0");
}

void EncoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".words", words.matrix);
  if (pos_tags.matrix.defined()) fn(prefix + ".pos", pos_tags.matrix);
  if (ner_tags.matrix.defined()) fn(prefix + ".ner", ner_tags.matrix);
  if (contextualizer.input_dim > 0) contextualizer.visit(prefix + ".ctx", fn);
  if (word_fusion_w.defined()) fn(prefix + ".word_fusion_w", word_fusion_w);
}

EncoderParams make_encoder_params(const InputConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                                  Vocab ner_vocab, std::uint64_t seed,
                                  const std::string& scope) {
  cfg.validate();
  EncoderParams p;
  p.words = make_embedding_table(std::move(word_vocab), cfg.word_dim, seed, scope + ".words");
  if (cfg.pos_dim > 0)
    p.pos_tags = make_embedding_table(std::move(pos_vocab), cfg.pos_dim, seed, scope + ".pos");
  if (cfg.ner_dim > 0)
    p.ner_tags = make_embedding_table(std::move(ner_vocab), cfg.ner_dim, seed, scope + ".ner");
  if (cfg.ctx_dim > 0) {
    p.contextualizer =
        make_bilstm_stack(cfg.word_dim, cfg.ctx_dim, 2, false, seed, scope + ".ctx");
    p.contextualizer.set_requires_grad(false);  // stand-in for a pretrained stack
  }
  if (cfg.use_word_fusion)
    p.word_fusion_w = init_param({cfg.word_dim, cfg.word_dim}, InitScheme::uniform_fan_in,
                                 seed, Rng::stream_key((scope + ".word_fusion_w").c_str()));
  // tag embeddings are small and task-specific: always trainable
  if (p.pos_tags.matrix.defined())
    for (int r = 0; r < p.pos_tags.vocab.size(); ++r) p.pos_tags.finetune_rows.insert(r);
  if (p.ner_tags.matrix.defined())
    for (int r = 0; r < p.ner_tags.vocab.size(); ++r) p.ner_tags.finetune_rows.insert(r);
  return p;
}

Tensor contextualize(Graph& g, const Tensor& word_emb, const BiLstmStack& frozen_stack) {
  return bilstm(g, word_emb, frozen_stack);
}

namespace {

Tensor const_column(const std::vector<real_t>& values) {
  Tensor t = Tensor::zeros({static_cast<int>(values.size()), 1});
  for (std::size_t i = 0; i < values.size(); ++i) t.value()[i] = values[i];
  return t;
}

struct SideFeatures {
  Tensor word_emb;  // masked word embeddings
  Tensor ctx;    // masked contextual vectors (undefined when disabled)
  Tensor base;   // [len x context_input_dim]-style feature matrix
};

SideFeatures build_side(Graph& g, const std::vector<std::string>& tokens,
                        const std::vector<std::string>& pos, const std::vector<std::string>& ner,
                        bool with_tags_and_tf, const EncoderParams& params,
                        const InputConfig& cfg, DropoutContext& drop) {
  if (tokens.empty()) throw EmptyInputError("build_input_vectors: empty token sequence");
  SideFeatures out;
  Tensor raw_words = embed_lookup(g, tokens, params.words);
  out.word_emb = drop.apply(g, raw_words, "drop.emb.word");
  std::vector<Tensor> parts{out.word_emb};
  if (cfg.ctx_dim > 0) {
    // the frozen stack sees raw embeddings; its output is what gets masked
    out.ctx = drop.apply(g, contextualize(g, raw_words, params.contextualizer),
                         "drop.emb.ctx");
    parts.push_back(out.ctx);
  }
  if (with_tags_and_tf) {
    if (cfg.pos_dim > 0) {
      if (pos.size() != tokens.size())
        throw ConfigError("pos_dim > 0 but pos tags are missing or mis-sized");
      parts.push_back(embed_lookup(g, pos, params.pos_tags));
    }
    if (cfg.ner_dim > 0) {
      if (ner.size() != tokens.size())
        throw ConfigError("ner_dim > 0 but ner tags are missing or mis-sized");
      parts.push_back(embed_lookup(g, ner, params.ner_tags));
    }
    if (cfg.use_tf) parts.push_back(const_column(term_frequency(tokens)));
  }
  out.base = parts.size() == 1 ? parts[0] : g.concat(parts, 1);
  return out;
}

}  // namespace

EncodedInputs build_input_vectors(Graph& g, const MrcExample& ex, const EncoderParams& params,
                                  const InputConfig& cfg, DropoutContext& drop) {
  cfg.validate();
  SideFeatures c = build_side(g, ex.context_tokens, ex.pos, ex.ner, true, params, cfg, drop);
  SideFeatures q =
      build_side(g, ex.question_tokens, {}, {}, false, params, cfg, drop);

  EncodedInputs out;
  out.word_c = c.word_emb;
  out.word_q = q.word_emb;
  out.ctx_c = c.ctx;
  out.ctx_q = q.ctx;
  out.context_inputs = c.base;
  out.question_inputs = q.base;

  std::vector<Tensor> enhanced{c.base};
  if (cfg.use_em)
    enhanced.push_back(
        const_column(exact_match_feature(ex.context_tokens, ex.question_tokens)));
  if (cfg.use_word_fusion) {
    Tensor wf_c = drop.apply(g, c.word_emb, "drop.wordfusion.in");
    Tensor wf_q = drop.apply(g, q.word_emb, "drop.wordfusion.in");
    FuseResult fused = word_fusion(g, wf_c, wf_q, params.word_fusion_w, "word");
    out.word_map = fused.weights;
    enhanced.push_back(fused.attended);
  }
  out.enhanced_context = enhanced.size() == 1 ? enhanced[0] : g.concat(enhanced, 1);
  return out;
}

PairEncodedInputs build_pair_input_vectors(Graph& g, const std::vector<std::string>& a_tokens,
                                           const std::vector<std::string>& b_tokens,
                                           const std::vector<std::string>& a_pos,
                                           const std::vector<std::string>& a_ner,
                                           const std::vector<std::string>& b_pos,
                                           const std::vector<std::string>& b_ner,
                                           const EncoderParams& params, const InputConfig& cfg,
                                           DropoutContext& drop) {
  cfg.validate();
  SideFeatures a = build_side(g, a_tokens, a_pos, a_ner, true, params, cfg, drop);
  SideFeatures b = build_side(g, b_tokens, b_pos, b_ner, true, params, cfg, drop);

  PairEncodedInputs out;
  out.word_a = a.word_emb;
  out.word_b = b.word_emb;
  out.a_inputs = a.base;
  out.b_inputs = b.base;

  auto enhance = [&](const SideFeatures& self, const SideFeatures& other,
                     const std::vector<std::string>& self_tokens,
                     const std::vector<std::string>& other_tokens,
                     std::optional<AttentionWeights>& map_out) {
    std::vector<Tensor> parts{self.base};
    if (cfg.use_em)
      parts.push_back(const_column(exact_match_feature(self_tokens, other_tokens)));
    if (cfg.use_word_fusion) {
      Tensor wf_self = drop.apply(g, self.word_emb, "drop.wordfusion.in");
      Tensor wf_other = drop.apply(g, other.word_emb, "drop.wordfusion.in");
      FuseResult fused = word_fusion(g, wf_self, wf_other, params.word_fusion_w, "word");
      map_out = fused.weights;
      parts.push_back(fused.attended);
    }
    return parts.size() == 1 ? parts[0] : g.concat(parts, 1);
  };
  out.a_enhanced = enhance(a, b, a_tokens, b_tokens, out.word_map_a);
  out.b_enhanced = enhance(b, a, b_tokens, a_tokens, out.word_map_b);
  return out;
}

}  // namespace fusion

#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusion/attention.hpp"
#include "fusion/data.hpp"
#include "fusion/dropout.hpp"
#include "fusion/rnn.hpp"

namespace fusion {

struct Vocab {
  std::unordered_map<std::string, int> index;
  int unk = 0;  // row of the dedicated unknown token

  int lookup(const std::string& token) const;
  int size() const { return static_cast<int>(index.size()); }

  // Sorted-unique tokens plus "<unk>"; deterministic row assignment.
  static Vocab build(const std::vector<const std::vector<std::string>*>& token_seqs);
};

struct EmbeddingTable {
  Vocab vocab;
  Tensor matrix;  // |V| x dim
  std::set<int> finetune_rows;  // rows outside never receive gradient
  int dim = 0;
};

EmbeddingTable make_embedding_table(Vocab vocab, int dim, std::uint64_t seed,
                                    const std::string& scope);

// Text format: one line per token, the token followed by `dim`
// whitespace-separated decimals. A "<unk>" line supplies the unknown row;
// a zero row is appended when absent.
EmbeddingTable load_embedding_table(const std::string& path);
void save_embedding_table(const std::string& path, const EmbeddingTable& table);

// Marks the n most frequent tokens of the given sequences (typically the
// training questions) as fine-tunable. Ties break lexicographically.
void set_finetune_top_n(EmbeddingTable& table,
                        const std::vector<const std::vector<std::string>*>& token_seqs, int n);

// Per-token rows, [len x dim]; unknown tokens hit the unk row. Gradient
// reaches only finetune_rows.
Tensor embed_lookup(Graph& g, const std::vector<std::string>& tokens,
                    const EmbeddingTable& table);

struct InputConfig {
  int word_dim = 16;
  int ctx_dim = 16;  // 0 disables contextual vectors
  int pos_dim = 4;   // 0 disables
  int ner_dim = 4;   // 0 disables
  bool use_tf = true;
  bool use_em = true;
  bool use_word_fusion = true;
  int finetune_top_n = 1000;

  int context_input_dim() const {
    return word_dim + ctx_dim + pos_dim + ner_dim + (use_tf ? 1 : 0);
  }
  int enhanced_context_dim() const {
    return context_input_dim() + (use_em ? 1 : 0) + (use_word_fusion ? word_dim : 0);
  }
  int question_input_dim() const { return word_dim + ctx_dim; }

  void validate() const;
};

struct EncoderParams {
  EmbeddingTable words;
  EmbeddingTable pos_tags;  // defined only when pos_dim > 0
  EmbeddingTable ner_tags;
  BiLstmStack contextualizer;  // frozen two-layer stack, defined when ctx_dim > 0
  Tensor word_fusion_w;        // word_dim x word_dim, defined when use_word_fusion

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

EncoderParams make_encoder_params(const InputConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                                  Vocab ner_vocab, std::uint64_t seed,
                                  const std::string& scope);

// Frozen contextual vectors over raw word embeddings, [len x ctx_dim].
Tensor contextualize(Graph& g, const Tensor& word_emb, const BiLstmStack& frozen_stack);

struct EncodedInputs {
  Tensor context_inputs;    // [m x context_input_dim]
  Tensor enhanced_context;  // [m x enhanced_context_dim]; == context_inputs when no enhancement
  Tensor question_inputs;   // [n x question_input_dim]
  Tensor word_c, word_q;  // [.. x word_dim], dropout already applied when training
  Tensor ctx_c, ctx_q;      // [.. x ctx_dim], undefined when disabled
  std::optional<AttentionWeights> word_map;
};

// Assembles the per-word input vectors for one example: word embedding,
// contextual vector, POS/NER embeddings and term frequency on the context
// side, plus exact match and attention-fused word embedding when enabled.
EncodedInputs build_input_vectors(Graph& g, const MrcExample& ex, const EncoderParams& params,
                                  const InputConfig& cfg, DropoutContext& drop);

// The same construction for a generic token-pair task where both sides get
// the full context-style features against the other side.
struct PairEncodedInputs {
  Tensor a_inputs, b_inputs;          // base feature matrices
  Tensor a_enhanced, b_enhanced;      // with EM + fused embedding when enabled
  Tensor word_a, word_b;
  std::optional<AttentionWeights> word_map_a, word_map_b;
};
PairEncodedInputs build_pair_input_vectors(Graph& g, const std::vector<std::string>& a_tokens,
                                           const std::vector<std::string>& b_tokens,
                                           const std::vector<std::string>& a_pos,
                                           const std::vector<std::string>& a_ner,
                                           const std::vector<std::string>& b_pos,
                                           const std::vector<std::string>& b_ner,
                                           const EncoderParams& params, const InputConfig& cfg,
                                           DropoutContext& drop);

}  // namespace fusion

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fusion/attention.hpp"
#include "fusion/data.hpp"
#include "fusion/dropout.hpp"
#include "fusion/encoder.hpp"
#include "fusion/rnn.hpp"

namespace fusion {

// ---------------------------------------------------------------------
// Span prediction head
// ---------------------------------------------------------------------

struct SpanHeadParams {
  int hidden = 0;
  Tensor w;    // question summary direction
  Tensor w_s;  // hidden x hidden, start bilinear
  Tensor w_e;  // hidden x hidden, end bilinear
  GruParams gru;  // memory update between start and end

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

SpanHeadParams make_span_head(int hidden, std::uint64_t seed, const std::string& scope);

struct SpanDistribution {
  Tensor p_start;  // m, sums to one
  Tensor p_end;
};

// softmax(w . u_q_i)-weighted sum of the question understanding rows.
Tensor summarize_question(Graph& g, const Tensor& u_q, const Tensor& w);

// softmax over i of q_vec^T W u_c_i.
Tensor span_scores(Graph& g, const Tensor& u_c, const Tensor& q_vec, const Tensor& w_mat);

// GRU(memory = u_q_vec, input = sum_i p_start_i u_c_i). The dropout
// context, when given, masks both GRU operands at the head.gru sites.
Tensor memory_update(Graph& g, const Tensor& u_q_vec, const Tensor& u_c, const Tensor& p_start,
                     const GruParams& gru, DropoutContext* drop = nullptr);

SpanDistribution span_head_forward(Graph& g, const SpanHeadParams& p, const Tensor& u_c,
                                   const Tensor& u_q, DropoutContext& drop);

// Negative log likelihood of the gold span; probabilities floored at 1e-30.
Tensor span_loss(Graph& g, const SpanDistribution& dist, int start, int end);

// argmax of p_start[s] * p_end[e] over 0 <= e - s <= max_len; ties take the
// smallest start, then the smallest end.
std::pair<int, int> decode_span(const std::vector<real_t>& p_start,
                                const std::vector<real_t>& p_end, int max_len);

// ---------------------------------------------------------------------
// Natural language inference head (cross-attention sentence-pair model)
// ---------------------------------------------------------------------

enum class NliVariant { standard, fully_aware, multi_level };

const char* nli_variant_name(NliVariant v);
NliVariant nli_variant_from_name(const std::string& name);

struct NliConfig {
  InputConfig input;
  int hidden = 32;  // per-layer bidirectional output width
  NliVariant variant = NliVariant::multi_level;
  ScorerKind scorer = ScorerKind::symmetric_nl;
  double dropout = 0.3;
  bool paper_dims = false;

  void validate() const;
  // [w; h_low; h_high] keys for the fully-aware variants; w is the input
  // vector the encoder consumed (with enhancement when word fusion is on)
  int how_dim() const { return input.enhanced_context_dim() + 2 * hidden; }
  int u_dim() const { return 2 * hidden; }      // two inference layers concatenated
  int pooled_dim() const { return 4 * u_dim(); }
};

void apply_paper_dims(NliConfig& cfg);

struct NliParams {
  EncoderParams encoder;
  BiLstmStack enc_stack;  // two layers with shortcut, shared by both sides
  ScorerParams scorer_p, scorer_h;          // high-level cross attention
  ScorerParams scorer_p_low, scorer_h_low;  // extra low-level routes (multi_level)
  BiLstmStack infer_p, infer_h;             // two layers with shortcut
  Tensor cls_w1, cls_b1;  // tanh hidden layer, size u_dim
  Tensor cls_w2, cls_b2;  // 3-way output

  void visit(const std::string& prefix, const ParamVisitor& fn);
  std::vector<Tensor> trainable_tensors();
};

NliParams make_nli_params(const NliConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                          Vocab ner_vocab, std::uint64_t seed);

struct NliState {
  Tensor u_p, u_h;  // [len x u_dim]
  Tensor pooled;
  Tensor logits;  // 3 class log-odds
  std::vector<AttentionWeights> maps;
};

// [mean u_p; max u_p; mean u_h; max u_h]
Tensor nli_pool(Graph& g, const Tensor& u_p, const Tensor& u_h);

NliState nli_forward(Graph& g, const NliParams& p, const NliConfig& cfg, const NliExample& ex,
                     DropoutContext& drop);

Tensor nli_loss(Graph& g, const Tensor& logits, int label);
int nli_predict(const std::vector<real_t>& logits);

}  // namespace fusion

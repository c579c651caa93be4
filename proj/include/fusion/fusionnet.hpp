#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fusion/attention.hpp"
#include "fusion/data.hpp"
#include "fusion/dropout.hpp"
#include "fusion/encoder.hpp"
#include "fusion/rnn.hpp"

namespace fusion {

enum class FusionMode { high_level, fa_high_level, fa_all_level, fa_multi_level };
enum class SelfMode { none, normal, fully_aware };

const char* fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_name(const std::string& name);
const char* self_mode_name(SelfMode m);
SelfMode self_mode_from_name(const std::string& name);

struct ModelConfig {
  InputConfig input;
  int hidden = 32;  // per-concept output width (split across directions)
  int att_k = 32;
  ScorerKind scorer = ScorerKind::symmetric_nl;
  FusionMode fusion_mode = FusionMode::fa_multi_level;
  SelfMode self_mode = SelfMode::fully_aware;
  bool share_cq = true;
  double dropout = 0.4;
  int span_max_len = 15;
  bool paper_dims = false;
  // Self-attention keys listed with the full input vector instead of
  // [word; contextual]; the variant described alongside the ablations.
  bool appendix_self_how = false;

  void validate() const;

  // [word; contextual; low; high]
  int fusion_how_dim() const { return input.word_dim + input.ctx_dim + 2 * hidden; }
  // [word; contextual; low; high; fused-low; fused-high; fused-understanding; mixed]
  int self_how_dim() const {
    const int head = appendix_self_how ? input.context_input_dim()
                                       : input.word_dim + input.ctx_dim;
    return head + 6 * hidden;
  }
};

// Flips every dimensionality to the sizes reported for the full-scale
// model; vocabularies stay whatever the data provides.
void apply_paper_dims(ModelConfig& cfg);

struct ReadingParams {
  bool share_low = false;
  bool share_high = false;
  // The *_q stacks alias the *_c tensors when shared.
  BiLstmStack low_c, low_q, high_c, high_q;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct FusionNetParams {
  EncoderParams encoder;
  ReadingParams reading;
  // fa_multi_level path
  BiLstmStack understanding;  // question side, input 2*hidden
  ScorerParams scorer_low, scorer_high, scorer_und;
  BiLstmStack c2;  // one layer (two when self_mode == none)
  ScorerParams scorer_self;
  BiLstmStack c4;
  // single-fusion paths (high_level / fa_high_level / fa_all_level)
  ScorerParams scorer_single;
  BiLstmStack mix;          // two layers
  BiLstmStack q_how_under;  // question understanding over raw history (fa_all_level)

  void visit(const std::string& prefix, const ParamVisitor& fn);
  std::vector<Tensor> trainable_tensors();
};

FusionNetParams make_fusionnet_params(const ModelConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                                      Vocab ner_vocab, std::uint64_t seed);

// Layered per-example representations plus every attention map recorded on
// the way through.
struct FusionState {
  EncodedInputs inputs;
  Tensor h_low_c, h_high_c, h_low_q, h_high_q;
  Tensor how_c, how_q;  // common fusion history (when the mode builds one)
  Tensor u_q;
  Tensor hat_low_c, hat_high_c, hat_u_c;
  Tensor v_c, vhat_c, self_how;
  Tensor u_c;
  std::vector<AttentionWeights> maps;
};

// Individual stages, exposed for direct testing; `forward` composes them.
struct ReadingOut {
  Tensor h_low_c, h_high_c, h_low_q, h_high_q;
};
ReadingOut reading(Graph& g, const Tensor& inputs_c, const Tensor& inputs_q,
                   const ReadingParams& p, DropoutContext& drop);

Tensor question_understanding(Graph& g, const Tensor& h_low_q, const Tensor& h_high_q,
                              const BiLstmStack& stack, DropoutContext& drop);

// [word; contextual; low; high] per word; contextual column absent when the
// feature is disabled.
Tensor build_fusion_how(Graph& g, const Tensor& word_emb, const Tensor& ctx, const Tensor& h_low,
                        const Tensor& h_high);

struct MultilevelOut {
  Tensor hat_low, hat_high, hat_u;
  AttentionWeights map_low, map_high, map_und;
};
MultilevelOut multilevel_fuse(Graph& g, const Tensor& how_c, const Tensor& how_q,
                              const Tensor& h_low_q, const Tensor& h_high_q, const Tensor& u_q,
                              const ScorerParams& s_low, const ScorerParams& s_high,
                              const ScorerParams& s_und, DropoutContext& drop);

Tensor mix_context(Graph& g, const Tensor& h_low_c, const Tensor& h_high_c,
                   const Tensor& hat_low, const Tensor& hat_high, const Tensor& hat_u,
                   const BiLstmStack& c2, DropoutContext& drop);

struct SelfBoostOut {
  Tensor u_c;
  Tensor vhat;      // undefined for SelfMode::none
  Tensor self_how;  // defined for the fully-aware setting
  std::optional<AttentionWeights> map;
};
SelfBoostOut self_boost(Graph& g, const FusionState& state, const MultilevelOut& fused,
                        const Tensor& v_c, const FusionNetParams& p, const ModelConfig& cfg,
                        DropoutContext& drop);

FusionState fusionnet_forward(Graph& g, const FusionNetParams& p, const ModelConfig& cfg,
                              const MrcExample& ex, DropoutContext& drop);

}  // namespace fusion

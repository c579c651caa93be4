#include "fusion/fusionnet.hpp"


namespace fusion {

const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::high_level:
      return "high_level";
    case FusionMode::fa_high_level:
      return "fa_high_level";
    case FusionMode::fa_all_level:
      return "fa_all_level";
    case FusionMode::fa_multi_level:
      return "fa_multi_level";
  }
  return "?";
}

FusionMode fusion_mode_from_name(const std::string& name) {
  for (auto m : {FusionMode::high_level, FusionMode::fa_high_level, FusionMode::fa_all_level,
                 FusionMode::fa_multi_level})
    if (name == fusion_mode_name(m)) return m;
  throw ConfigError("unknown fusion mode: " + name);
}

const char* self_mode_name(SelfMode m) {
  switch (m) {
    case SelfMode::none:
      return "none";
    case SelfMode::normal:
      return "normal";
    case SelfMode::fully_aware:
      return "fully_aware";
  }
  return "?";
}

SelfMode self_mode_from_name(const std::string& name) {
  for (auto m : {SelfMode::none, SelfMode::normal, SelfMode::fully_aware})
    if (name == self_mode_name(m)) return m;
  throw ConfigError("unknown self mode: " + name);
}

void ModelConfig::validate() const {
  input.validate();
  if (hidden < 2 || hidden % 2 != 0)
    throw ConfigError("hidden must be even and >= 2, got " + std::to_string(hidden));
  if (att_k < 1) throw ConfigError("att_k must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (span_max_len < 0) throw ConfigError("span_max_len must be >= 0");
}

void apply_paper_dims(ModelConfig& cfg) {
  cfg.input.word_dim = 300;
  cfg.input.ctx_dim = 600;
  cfg.input.pos_dim = 12;
  cfg.input.ner_dim = 8;
  cfg.input.use_tf = true;
  cfg.input.use_em = true;
  cfg.input.use_word_fusion = true;
  cfg.hidden = 250;
  cfg.att_k = 250;
  cfg.paper_dims = true;
}

void ReadingParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  low_c.visit(prefix + ".low_c", fn);
  if (!share_low) low_q.visit(prefix + ".low_q", fn);
  high_c.visit(prefix + ".high_c", fn);
  if (!share_high) high_q.visit(prefix + ".high_q", fn);
}

void FusionNetParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  encoder.visit(prefix + ".enc", fn);
  reading.visit(prefix + ".read", fn);
  if (!understanding.layers.empty()) understanding.visit(prefix + ".und", fn);
  if (scorer_low.k > 0) scorer_low.visit(prefix + ".s_low", fn);
  if (scorer_high.k > 0) scorer_high.visit(prefix + ".s_high", fn);
  if (scorer_und.k > 0) scorer_und.visit(prefix + ".s_und", fn);
  if (!c2.layers.empty()) c2.visit(prefix + ".c2", fn);
  if (scorer_self.k > 0) scorer_self.visit(prefix + ".s_self", fn);
  if (!c4.layers.empty()) c4.visit(prefix + ".c4", fn);
  if (scorer_single.k > 0) scorer_single.visit(prefix + ".s_single", fn);
  if (!mix.layers.empty()) mix.visit(prefix + ".mix", fn);
  if (!q_how_under.layers.empty()) q_how_under.visit(prefix + ".q_how_under", fn);
}

std::vector<Tensor> FusionNetParams::trainable_tensors() {
  std::vector<Tensor> out;
  visit("net", [&out](const std::string&, Tensor& t) {
    if (t.requires_grad()) out.push_back(t);
  });
  return out;
}

FusionNetParams make_fusionnet_params(const ModelConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                                      Vocab ner_vocab, std::uint64_t seed) {
  cfg.validate();
  FusionNetParams p;
  p.encoder = make_encoder_params(cfg.input, std::move(word_vocab), std::move(pos_vocab),
                                  std::move(ner_vocab), seed, "enc");

  const int c_in = cfg.input.enhanced_context_dim();
  const int q_in = cfg.input.question_input_dim();
  p.reading.share_low = cfg.share_cq && c_in == q_in;
  p.reading.share_high = cfg.share_cq;
  p.reading.low_c = make_bilstm_stack(c_in, cfg.hidden, 1, false, seed, "read.low_c");
  p.reading.low_q = p.reading.share_low
                        ? p.reading.low_c
                        : make_bilstm_stack(q_in, cfg.hidden, 1, false, seed, "read.low_q");
  p.reading.high_c = make_bilstm_stack(cfg.hidden, cfg.hidden, 1, false, seed, "read.high_c");
  p.reading.high_q = p.reading.share_high ? p.reading.high_c
                                          : make_bilstm_stack(cfg.hidden, cfg.hidden, 1, false,
                                                              seed, "read.high_q");

  const int how = cfg.fusion_how_dim();
  switch (cfg.fusion_mode) {
    case FusionMode::high_level:
      p.scorer_single = make_scorer(cfg.scorer, cfg.att_k, cfg.hidden, seed, "s_single");
      p.mix = make_bilstm_stack(2 * cfg.hidden, cfg.hidden, 2, false, seed, "mix");
      break;
    case FusionMode::fa_high_level:
      p.scorer_single = make_scorer(cfg.scorer, cfg.att_k, how, seed, "s_single");
      p.mix = make_bilstm_stack(2 * cfg.hidden, cfg.hidden, 2, false, seed, "mix");
      break;
    case FusionMode::fa_all_level:
      p.scorer_single = make_scorer(cfg.scorer, cfg.att_k, how, seed, "s_single");
      p.mix = make_bilstm_stack(2 * how, cfg.hidden, 2, false, seed, "mix");
      p.q_how_under = make_bilstm_stack(how, cfg.hidden, 1, false, seed, "q_how_under");
      break;
    case FusionMode::fa_multi_level: {
      p.understanding = make_bilstm_stack(2 * cfg.hidden, cfg.hidden, 1, false, seed, "und");
      p.scorer_low = make_scorer(cfg.scorer, cfg.att_k, how, seed, "s_low");
      p.scorer_high = make_scorer(cfg.scorer, cfg.att_k, how, seed, "s_high");
      p.scorer_und = make_scorer(cfg.scorer, cfg.att_k, how, seed, "s_und");
      const int c2_layers = cfg.self_mode == SelfMode::none ? 2 : 1;
      p.c2 = make_bilstm_stack(5 * cfg.hidden, cfg.hidden, c2_layers, false, seed, "c2");
      if (cfg.self_mode == SelfMode::normal)
        p.scorer_self = make_scorer(cfg.scorer, cfg.att_k, cfg.hidden, seed, "s_self");
      else if (cfg.self_mode == SelfMode::fully_aware)
        p.scorer_self = make_scorer(cfg.scorer, cfg.att_k, cfg.self_how_dim(), seed, "s_self");
      if (cfg.self_mode != SelfMode::none)
        p.c4 = make_bilstm_stack(2 * cfg.hidden, cfg.hidden, 1, false, seed, "c4");
      break;
    }
  }
  return p;
}

namespace {

// One-layer reading pass with the input-site dropout mask keyed by the
// owning parameter scope, so shared parameters reuse one mask.
Tensor read_layer(Graph& g, const Tensor& seq, const BiLstmStack& stack,
                  const std::string& mask_key, DropoutContext& drop) {
  Tensor masked = drop.apply(g, seq, mask_key);
  return bilstm(g, masked, stack);
}

Tensor run_stack(Graph& g, const Tensor& seq, const BiLstmStack& stack,
                 const std::string& mask_key_prefix, DropoutContext& drop) {
  Tensor in = seq;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    if (l > 0 && stack.shortcut) in = g.concat({seq, in}, 1);
    in = drop.apply(g, in, mask_key_prefix + ".l" + std::to_string(l));
    in = bilstm_layer(g, in, stack.layers[l]);
  }
  return in;
}

}  // namespace

ReadingOut reading(Graph& g, const Tensor& inputs_c, const Tensor& inputs_q,
                   const ReadingParams& p, DropoutContext& drop) {
  ReadingOut out;
  out.h_low_c = read_layer(g, inputs_c, p.low_c,
                           p.share_low ? "drop.read.low.in" : "drop.read.low_c.in", drop);
  out.h_low_q = read_layer(g, inputs_q, p.low_q,
                           p.share_low ? "drop.read.low.in" : "drop.read.low_q.in", drop);
  out.h_high_c = read_layer(g, out.h_low_c, p.high_c,
                            p.share_high ? "drop.read.high.in" : "drop.read.high_c.in", drop);
  out.h_high_q = read_layer(g, out.h_low_q, p.high_q,
                            p.share_high ? "drop.read.high.in" : "drop.read.high_q.in", drop);
  return out;
}

Tensor question_understanding(Graph& g, const Tensor& h_low_q, const Tensor& h_high_q,
                              const BiLstmStack& stack, DropoutContext& drop) {
  if (h_low_q.rows() != h_high_q.rows())
    throw ShapeError("question_understanding: level lengths differ");
  Tensor in = g.concat({h_low_q, h_high_q}, 1);
  return read_layer(g, in, stack, "drop.und.in", drop);
}

Tensor build_fusion_how(Graph& g, const Tensor& word_emb, const Tensor& ctx, const Tensor& h_low,
                        const Tensor& h_high) {
  std::vector<Tensor> parts{word_emb};
  if (ctx.defined()) parts.push_back(ctx);
  parts.push_back(h_low);
  parts.push_back(h_high);
  return g.concat(parts, 1);
}

MultilevelOut multilevel_fuse(Graph& g, const Tensor& how_c, const Tensor& how_q,
                              const Tensor& h_low_q, const Tensor& h_high_q, const Tensor& u_q,
                              const ScorerParams& s_low, const ScorerParams& s_high,
                              const ScorerParams& s_und, DropoutContext& drop) {
  MultilevelOut out;
  {
    Tensor a = drop.apply(g, how_c, "drop.scorer.low.in");
    Tensor b = drop.apply(g, how_q, "drop.scorer.low.in");
    FuseResult r = fuse(g, a, b, h_low_q, s_low, "low");
    out.hat_low = r.attended;
    out.map_low = std::move(r.weights);
  }
  {
    Tensor a = drop.apply(g, how_c, "drop.scorer.high.in");
    Tensor b = drop.apply(g, how_q, "drop.scorer.high.in");
    FuseResult r = fuse(g, a, b, h_high_q, s_high, "high");
    out.hat_high = r.attended;
    out.map_high = std::move(r.weights);
  }
  {
    Tensor a = drop.apply(g, how_c, "drop.scorer.und.in");
    Tensor b = drop.apply(g, how_q, "drop.scorer.und.in");
    FuseResult r = fuse(g, a, b, u_q, s_und, "understanding");
    out.hat_u = r.attended;
    out.map_und = std::move(r.weights);
  }
  return out;
}

Tensor mix_context(Graph& g, const Tensor& h_low_c, const Tensor& h_high_c,
                   const Tensor& hat_low, const Tensor& hat_high, const Tensor& hat_u,
                   const BiLstmStack& c2, DropoutContext& drop) {
  Tensor in = g.concat({h_low_c, h_high_c, hat_low, hat_high, hat_u}, 1);
  return run_stack(g, in, c2, "drop.c2", drop);
}

SelfBoostOut self_boost(Graph& g, const FusionState& state, const MultilevelOut& fused,
                        const Tensor& v_c, const FusionNetParams& p, const ModelConfig& cfg,
                        DropoutContext& drop) {
  SelfBoostOut out;
  if (cfg.self_mode == SelfMode::none) {
    out.u_c = v_c;  // the caller ran the two-layer mix directly
    return out;
  }
  Tensor keys;
  if (cfg.self_mode == SelfMode::normal) {
    keys = v_c;
  } else {
    std::vector<Tensor> parts;
    if (cfg.appendix_self_how)
      parts.push_back(state.inputs.context_inputs);
    else {
      parts.push_back(state.inputs.word_c);
      if (state.inputs.ctx_c.defined()) parts.push_back(state.inputs.ctx_c);
    }
    parts.insert(parts.end(), {state.h_low_c, state.h_high_c, fused.hat_low, fused.hat_high,
                               fused.hat_u, v_c});
    out.self_how = g.concat(parts, 1);
    keys = out.self_how;
  }
  Tensor masked_keys = drop.apply(g, keys, "drop.scorer.self.in");
  FuseResult r = fuse(g, masked_keys, masked_keys, v_c, p.scorer_self, "self");
  out.vhat = r.attended;
  out.map = std::move(r.weights);
  Tensor in = g.concat({v_c, out.vhat}, 1);
  out.u_c = run_stack(g, in, p.c4, "drop.c4", drop);
  return out;
}

FusionState fusionnet_forward(Graph& g, const FusionNetParams& p, const ModelConfig& cfg,
                              const MrcExample& ex, DropoutContext& drop) {
  cfg.validate();
  FusionState st;
  st.inputs = build_input_vectors(g, ex, p.encoder, cfg.input, drop);
  if (st.inputs.word_map) st.maps.push_back(*st.inputs.word_map);

  ReadingOut r =
      reading(g, st.inputs.enhanced_context, st.inputs.question_inputs, p.reading, drop);
  st.h_low_c = r.h_low_c;
  st.h_high_c = r.h_high_c;
  st.h_low_q = r.h_low_q;
  st.h_high_q = r.h_high_q;

  switch (cfg.fusion_mode) {
    case FusionMode::high_level: {
      Tensor ka = drop.apply(g, st.h_high_c, "drop.scorer.single.in");
      Tensor kb = drop.apply(g, st.h_high_q, "drop.scorer.single.in");
      FuseResult fr = fuse(g, ka, kb, st.h_high_q, p.scorer_single, "high");
      st.maps.push_back(fr.weights);
      st.u_c = run_stack(g, g.concat({st.h_high_c, fr.attended}, 1), p.mix, "drop.mix", drop);
      st.u_q = st.h_high_q;
      break;
    }
    case FusionMode::fa_high_level: {
      st.how_c = build_fusion_how(g, st.inputs.word_c, st.inputs.ctx_c, st.h_low_c,
                                  st.h_high_c);
      st.how_q = build_fusion_how(g, st.inputs.word_q, st.inputs.ctx_q, st.h_low_q,
                                  st.h_high_q);
      Tensor ka = drop.apply(g, st.how_c, "drop.scorer.single.in");
      Tensor kb = drop.apply(g, st.how_q, "drop.scorer.single.in");
      FuseResult fr = fuse(g, ka, kb, st.h_high_q, p.scorer_single, "high");
      st.maps.push_back(fr.weights);
      st.u_c = run_stack(g, g.concat({st.h_high_c, fr.attended}, 1), p.mix, "drop.mix", drop);
      st.u_q = st.h_high_q;
      break;
    }
    case FusionMode::fa_all_level: {
      st.how_c = build_fusion_how(g, st.inputs.word_c, st.inputs.ctx_c, st.h_low_c,
                                  st.h_high_c);
      st.how_q = build_fusion_how(g, st.inputs.word_q, st.inputs.ctx_q, st.h_low_q,
                                  st.h_high_q);
      Tensor ka = drop.apply(g, st.how_c, "drop.scorer.single.in");
      Tensor kb = drop.apply(g, st.how_q, "drop.scorer.single.in");
      // one attention weight carries the entire history of the question
      FuseResult fr = fuse(g, ka, kb, st.how_q, p.scorer_single, "high");
      st.maps.push_back(fr.weights);
      st.u_c = run_stack(g, g.concat({st.how_c, fr.attended}, 1), p.mix, "drop.mix", drop);
      st.u_q = read_layer(g, st.how_q, p.q_how_under, "drop.q_how_under.in", drop);
      break;
    }
    case FusionMode::fa_multi_level: {
      st.u_q = question_understanding(g, st.h_low_q, st.h_high_q, p.understanding, drop);
      st.how_c = build_fusion_how(g, st.inputs.word_c, st.inputs.ctx_c, st.h_low_c,
                                  st.h_high_c);
      st.how_q = build_fusion_how(g, st.inputs.word_q, st.inputs.ctx_q, st.h_low_q,
                                  st.h_high_q);
      MultilevelOut fused = multilevel_fuse(g, st.how_c, st.how_q, st.h_low_q, st.h_high_q,
                                            st.u_q, p.scorer_low, p.scorer_high, p.scorer_und,
                                            drop);
      st.hat_low_c = fused.hat_low;
      st.hat_high_c = fused.hat_high;
      st.hat_u_c = fused.hat_u;
      st.maps.push_back(fused.map_low);
      st.maps.push_back(fused.map_high);
      st.maps.push_back(fused.map_und);
      st.v_c = mix_context(g, st.h_low_c, st.h_high_c, fused.hat_low, fused.hat_high,
                           fused.hat_u, p.c2, drop);
      SelfBoostOut sb = self_boost(g, st, fused, st.v_c, p, cfg, drop);
      st.vhat_c = sb.vhat;
      st.self_how = sb.self_how;
      if (sb.map) st.maps.push_back(*sb.map);
      st.u_c = sb.u_c;
      break;
    }
  }
  return st;
}

}  // namespace fusion

#include "fusion/heads.hpp"

#include "fusion/rng.hpp"

namespace fusion {

void SpanHeadParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", w);
  fn(prefix + ".w_s", w_s);
  fn(prefix + ".w_e", w_e);
  gru.visit(prefix + ".gru", fn);
}

SpanHeadParams make_span_head(int hidden, std::uint64_t seed, const std::string& scope) {
  if (hidden < 1) throw ConfigError("span head hidden must be positive");
  SpanHeadParams p;
  p.hidden = hidden;
  p.w = init_param({hidden}, InitScheme::uniform_fan_in, seed,
                   Rng::stream_key((scope + ".w").c_str()));
  p.w_s = init_param({hidden, hidden}, InitScheme::uniform_fan_in, seed,
                     Rng::stream_key((scope + ".w_s").c_str()));
  p.w_e = init_param({hidden, hidden}, InitScheme::uniform_fan_in, seed,
                     Rng::stream_key((scope + ".w_e").c_str()));
  p.gru = make_gru(hidden, hidden, seed, scope + ".gru");
  return p;
}

Tensor summarize_question(Graph& g, const Tensor& u_q, const Tensor& w) {
  if (u_q.rank() != 2 || u_q.cols() != w.dim(0))
    throw ShapeError("summarize_question: dims disagree");
  Tensor beta = g.softmax(g.matvec(u_q, w));
  return g.matvec_t(u_q, beta);
}

Tensor span_scores(Graph& g, const Tensor& u_c, const Tensor& q_vec, const Tensor& w_mat) {
  if (u_c.rank() != 2 || w_mat.rank() != 2 || u_c.cols() != w_mat.cols() ||
      q_vec.dim(0) != w_mat.rows())
    throw ShapeError("span_scores: dims disagree");
  // q^T W u_i computed as (W^T q) . u_i
  Tensor direction = g.matvec_t(w_mat, q_vec);
  return g.softmax(g.matvec(u_c, direction));
}

Tensor memory_update(Graph& g, const Tensor& u_q_vec, const Tensor& u_c, const Tensor& p_start,
                     const GruParams& gru, DropoutContext* drop) {
  if (p_start.dim(0) != u_c.rows()) throw ShapeError("memory_update: p_start length mismatch");
  Tensor x = g.matvec_t(u_c, p_start);
  Tensor h = u_q_vec;
  if (drop) {
    x = drop->apply(g, x, "drop.head.gru.x");
    h = drop->apply(g, h, "drop.head.gru.h");
  }
  return gru_step(g, x, h, gru);
}

SpanDistribution span_head_forward(Graph& g, const SpanHeadParams& p, const Tensor& u_c,
                                   const Tensor& u_q, DropoutContext& drop) {
  Tensor q_vec = summarize_question(g, drop.apply(g, u_q, "drop.head.summary.in"), p.w);
  SpanDistribution dist;
  dist.p_start = span_scores(g, drop.apply(g, u_c, "drop.head.start.ctx"),
                             drop.apply(g, q_vec, "drop.head.start.q"), p.w_s);
  Tensor v_q = memory_update(g, q_vec, u_c, dist.p_start, p.gru, &drop);
  dist.p_end = span_scores(g, drop.apply(g, u_c, "drop.head.end.ctx"),
                           drop.apply(g, v_q, "drop.head.end.q"), p.w_e);
  return dist;
}

Tensor span_loss(Graph& g, const SpanDistribution& dist, int start, int end) {
  const int m = dist.p_start.dim(0);
  if (start < 0 || end < start || end >= m)
    throw ContractError("span_loss: gold span [" + std::to_string(start) + ", " +
                        std::to_string(end) + "] out of range for " + std::to_string(m));
  constexpr real_t kFloor = real_t(1e-30);
  Tensor lp_s = g.log_floor(g.pick(dist.p_start, start), kFloor);
  Tensor lp_e = g.log_floor(g.pick(dist.p_end, end), kFloor);
  return g.neg(g.add(lp_s, lp_e));
}

std::pair<int, int> decode_span(const std::vector<real_t>& p_start,
                                const std::vector<real_t>& p_end, int max_len) {
  const int m = static_cast<int>(p_start.size());
  if (m < 1 || p_end.size() != p_start.size())
    throw ShapeError("decode_span: bad distribution sizes");
  int best_s = 0, best_e = 0;
  real_t best = real_t(-1);
  for (int s = 0; s < m; ++s) {
    const int e_hi = std::min(m - 1, s + max_len);
    for (int e = s; e <= e_hi; ++e) {
      const real_t v = p_start[static_cast<std::size_t>(s)] * p_end[static_cast<std::size_t>(e)];
      if (v > best) {  // strict: first (smallest s, then e) wins ties
        best = v;
        best_s = s;
        best_e = e;
      }
    }
  }
  return {best_s, best_e};
}

// ---------------------------------------------------------------------
// NLI
// ---------------------------------------------------------------------

const char* nli_variant_name(NliVariant v) {
  switch (v) {
    case NliVariant::standard:
      return "standard";
    case NliVariant::fully_aware:
      return "fully_aware";
    case NliVariant::multi_level:
      return "multi_level";
  }
  return "?";
}

NliVariant nli_variant_from_name(const std::string& name) {
  for (auto v : {NliVariant::standard, NliVariant::fully_aware, NliVariant::multi_level})
    if (name == nli_variant_name(v)) return v;
  throw ConfigError("unknown nli variant: " + name);
}

void NliConfig::validate() const {
  input.validate();
  if (hidden < 2 || hidden % 2 != 0)
    throw ConfigError("nli hidden must be even and >= 2, got " + std::to_string(hidden));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

void apply_paper_dims(NliConfig& cfg) {
  cfg.input.word_dim = 300;
  cfg.input.ctx_dim = 600;
  // the sentence-pair records carry no POS/NER tags, so those slices stay off
  cfg.input.pos_dim = 0;
  cfg.input.ner_dim = 0;
  cfg.input.use_tf = true;
  cfg.hidden = 300;  // 150 per direction
  cfg.paper_dims = true;
}

void NliParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  encoder.visit(prefix + ".enc", fn);
  enc_stack.visit(prefix + ".enc_stack", fn);
  scorer_p.visit(prefix + ".s_p", fn);
  scorer_h.visit(prefix + ".s_h", fn);
  if (scorer_p_low.k > 0) scorer_p_low.visit(prefix + ".s_p_low", fn);
  if (scorer_h_low.k > 0) scorer_h_low.visit(prefix + ".s_h_low", fn);
  infer_p.visit(prefix + ".infer_p", fn);
  infer_h.visit(prefix + ".infer_h", fn);
  fn(prefix + ".cls_w1", cls_w1);
  fn(prefix + ".cls_b1", cls_b1);
  fn(prefix + ".cls_w2", cls_w2);
  fn(prefix + ".cls_b2", cls_b2);
}

std::vector<Tensor> NliParams::trainable_tensors() {
  std::vector<Tensor> out;
  visit("nli", [&out](const std::string&, Tensor& t) {
    if (t.requires_grad()) out.push_back(t);
  });
  return out;
}

NliParams make_nli_params(const NliConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                          Vocab ner_vocab, std::uint64_t seed) {
  cfg.validate();
  NliParams p;
  p.encoder = make_encoder_params(cfg.input, std::move(word_vocab), std::move(pos_vocab),
                                  std::move(ner_vocab), seed, "nli.enc");
  const int in_dim = cfg.input.enhanced_context_dim();
  p.enc_stack = make_bilstm_stack(in_dim, cfg.hidden, 2, true, seed, "nli.enc_stack");

  const int key_dim = cfg.variant == NliVariant::standard ? cfg.hidden : cfg.how_dim();
  const int k = cfg.hidden;  // attention hidden size tracks the hidden vectors
  p.scorer_p = make_scorer(cfg.scorer, k, key_dim, seed, "nli.s_p");
  p.scorer_h = make_scorer(cfg.scorer, k, key_dim, seed, "nli.s_h");

  int infer_in = 2 * cfg.hidden;
  if (cfg.variant == NliVariant::multi_level) {
    p.scorer_p_low = make_scorer(cfg.scorer, k, key_dim, seed, "nli.s_p_low");
    p.scorer_h_low = make_scorer(cfg.scorer, k, key_dim, seed, "nli.s_h_low");
    infer_in = 4 * cfg.hidden;
  }
  p.infer_p = make_bilstm_stack(infer_in, cfg.hidden, 2, true, seed, "nli.infer_p");
  p.infer_h = make_bilstm_stack(infer_in, cfg.hidden, 2, true, seed, "nli.infer_h");

  const int u = cfg.u_dim();
  p.cls_w1 = init_param({u, cfg.pooled_dim()}, InitScheme::uniform_fan_in, seed,
                        Rng::stream_key("nli.cls_w1"));
  p.cls_b1 = init_param({u}, InitScheme::zeros, seed);
  p.cls_w2 = init_param({3, u}, InitScheme::uniform_fan_in, seed,
                        Rng::stream_key("nli.cls_w2"));
  p.cls_b2 = init_param({3}, InitScheme::zeros, seed);
  return p;
}

Tensor nli_pool(Graph& g, const Tensor& u_p, const Tensor& u_h) {
  return g.concat({g.colwise_mean(u_p), g.colwise_max(u_p), g.colwise_mean(u_h),
                   g.colwise_max(u_h)},
                  0);
}

namespace {

Tensor run_shortcut_stack(Graph& g, const Tensor& seq, const BiLstmStack& stack,
                          const std::string& mask_prefix, DropoutContext& drop,
                          std::vector<Tensor>* layer_outs = nullptr) {
  Tensor in = seq;
  Tensor out;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    if (l > 0 && stack.shortcut) in = g.concat({seq, in}, 1);
    in = drop.apply(g, in, mask_prefix + ".l" + std::to_string(l));
    in = bilstm_layer(g, in, stack.layers[l]);
    if (layer_outs) layer_outs->push_back(in);
    out = in;
  }
  return out;
}

}  // namespace

NliState nli_forward(Graph& g, const NliParams& p, const NliConfig& cfg, const NliExample& ex,
                     DropoutContext& drop) {
  cfg.validate();
  if (ex.premise_tokens.empty() || ex.hypothesis_tokens.empty())
    throw EmptyInputError("nli_forward: empty side");

  PairEncodedInputs enc = build_pair_input_vectors(g, ex.premise_tokens, ex.hypothesis_tokens,
                                                   {}, {}, {}, {}, p.encoder, cfg.input, drop);
  NliState st;

  std::vector<Tensor> p_layers, h_layers;
  run_shortcut_stack(g, enc.a_enhanced, p.enc_stack, "drop.nli.enc", drop, &p_layers);
  run_shortcut_stack(g, enc.b_enhanced, p.enc_stack, "drop.nli.enc", drop, &h_layers);
  Tensor h_pl = p_layers[0], h_ph = p_layers[1];
  Tensor h_hl = h_layers[0], h_hh = h_layers[1];

  // keys for the attention: plain high-level vectors, or [w; h_l; h_h]
  // with w being whatever input vector actually fed the encoder
  Tensor keys_p = h_ph, keys_h = h_hh;
  if (cfg.variant != NliVariant::standard) {
    keys_p = g.concat({enc.a_enhanced, h_pl, h_ph}, 1);
    keys_h = g.concat({enc.b_enhanced, h_hl, h_hh}, 1);
  }

  // premise side: row softmax over hypothesis positions
  auto attend_p = [&](const ScorerParams& scorer, const Tensor& values,
                      const std::string& mask_key, const char* tag) {
    Tensor ka = drop.apply(g, keys_p, mask_key);
    Tensor kb = drop.apply(g, keys_h, mask_key);
    FuseResult r = fuse(g, ka, kb, values, scorer, tag);
    st.maps.push_back(r.weights);
    return r.attended;
  };
  // hypothesis side: scores keep premise-first arguments and normalize over
  // the premise axis
  auto attend_h = [&](const ScorerParams& scorer, const Tensor& values,
                      const std::string& mask_key, const char* tag) {
    Tensor ka = drop.apply(g, keys_p, mask_key);
    Tensor kb = drop.apply(g, keys_h, mask_key);
    Tensor scores = score_matrix(g, scorer, ka, kb);
    Tensor alpha = g.softmax_rows(g.transpose(scores));
    AttentionWeights w;
    w.rows = alpha.rows();
    w.cols = alpha.cols();
    w.weights = alpha.value();
    w.level_tag = tag;
    st.maps.push_back(std::move(w));
    return g.matmul(alpha, values);
  };

  Tensor hat_ph = attend_p(p.scorer_p, h_hh, "drop.nli.scorer.p.in", "p_high");
  Tensor hat_hh = attend_h(p.scorer_h, h_ph, "drop.nli.scorer.h.in", "h_high");

  Tensor g_p, g_h;
  if (cfg.variant == NliVariant::multi_level) {
    Tensor hat_pl = attend_p(p.scorer_p_low, h_hl, "drop.nli.scorer.p_low.in", "p_low");
    Tensor hat_hl = attend_h(p.scorer_h_low, h_pl, "drop.nli.scorer.h_low.in", "h_low");
    g_p = g.concat({h_pl, h_ph, hat_pl, hat_ph}, 1);
    g_h = g.concat({h_hl, h_hh, hat_hl, hat_hh}, 1);
  } else {
    g_p = g.concat({h_ph, hat_ph}, 1);
    g_h = g.concat({h_hh, hat_hh}, 1);
  }

  std::vector<Tensor> up_layers, uh_layers;
  run_shortcut_stack(g, g_p, p.infer_p, "drop.nli.infer_p", drop, &up_layers);
  run_shortcut_stack(g, g_h, p.infer_h, "drop.nli.infer_h", drop, &uh_layers);
  st.u_p = g.concat({up_layers[0], up_layers[1]}, 1);
  st.u_h = g.concat({uh_layers[0], uh_layers[1]}, 1);

  st.pooled = nli_pool(g, st.u_p, st.u_h);
  Tensor cls_in = drop.apply(g, st.pooled, "drop.nli.cls.in");
  Tensor hidden = g.activation(g.add(g.matvec(p.cls_w1, cls_in), p.cls_b1), Act::tanh_fn);
  st.logits = g.add(g.matvec(p.cls_w2, hidden), p.cls_b2);
  return st;
}

Tensor nli_loss(Graph& g, const Tensor& logits, int label) {
  if (label < 0 || label > 2) throw ContractError("nli_loss: label out of range");
  Tensor probs = g.softmax(logits);
  return g.neg(g.log_floor(g.pick(probs, label), real_t(1e-30)));
}

int nli_predict(const std::vector<real_t>& logits) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i)
    if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
  return best;
}

}  // namespace fusion

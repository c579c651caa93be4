#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>

#include "doctest.h"
#include "fusion/encoder.hpp"
#include "fusion/rng.hpp"

using namespace fusion;

namespace {

const std::vector<std::string> kCtx{"the", "rhine", "holds", "water", "."};
const std::vector<std::string> kQ{"what", "holds", "water", "?"};
const std::vector<std::string> kPos{"DET", "NOUN", "VERB", "NOUN", "PUNCT"};
const std::vector<std::string> kNer{"O", "KEY", "O", "VAL", "O"};

MrcExample example() {
  MrcExample ex;
  ex.id = "t";
  ex.context_tokens = kCtx;
  ex.question_tokens = kQ;
  ex.pos = kPos;
  ex.ner = kNer;
  ex.answer_start = 3;
  ex.answer_end = 3;
  ex.answers = {"water"};
  return ex;
}

EncoderParams params_for(const InputConfig& cfg, std::uint64_t seed = 3) {
  Vocab words = Vocab::build({&kCtx, &kQ});
  Vocab pos = Vocab::build({&kPos});
  Vocab ner = Vocab::build({&kNer});
  return make_encoder_params(cfg, words, pos, ner, seed, "enc");
}

}  // namespace

TEST_CASE("vocab build is deterministic and maps unknowns to unk") {
  Vocab v = Vocab::build({&kCtx, &kQ});
  Vocab w = Vocab::build({&kQ, &kCtx});  // order of sequences must not matter
  CHECK(v.index == w.index);
  CHECK(v.lookup("rhine") != v.unk);
  CHECK(v.lookup("zebra") == v.unk);
}

TEST_CASE("embed_lookup returns exact rows and the unk row for oov") {
  Vocab v = Vocab::build({&kCtx});
  EmbeddingTable t = make_embedding_table(v, 4, 7, "t");
  Graph g;
  Tensor rows = embed_lookup(g, {"rhine", "zebra"}, t);
  const int r = v.lookup("rhine");
  for (int j = 0; j < 4; ++j) {
    CHECK(rows.at(0, j) == t.matrix.at(r, j));
    CHECK(rows.at(1, j) == t.matrix.at(v.unk, j));
  }
  CHECK_THROWS_AS(embed_lookup(g, {}, t), EmptyInputError);
}

TEST_CASE("finetune rows gate the embedding gradient") {
  Vocab v = Vocab::build({&kCtx});
  EmbeddingTable t = make_embedding_table(v, 3, 1, "t");
  t.finetune_rows = {v.lookup("rhine")};
  Graph g;
  Tensor rows = embed_lookup(g, {"rhine", "water"}, t);
  g.backward(g.sum(rows));
  for (int j = 0; j < 3; ++j) {
    CHECK(t.matrix.grad()[static_cast<std::size_t>(v.lookup("rhine") * 3 + j)] == real_t(1));
    CHECK(t.matrix.grad()[static_cast<std::size_t>(v.lookup("water") * 3 + j)] == real_t(0));
  }
}

TEST_CASE("set_finetune_top_n keeps the most frequent question tokens") {
  std::vector<std::string> q1{"what", "holds", "water"};
  std::vector<std::string> q2{"what", "holds", "fire"};
  std::vector<std::string> q3{"what", "is", "this"};
  Vocab v = Vocab::build({&q1, &q2, &q3});
  EmbeddingTable t = make_embedding_table(v, 2, 0, "t");
  set_finetune_top_n(t, {&q1, &q2, &q3}, 2);
  CHECK(t.finetune_rows.size() == 2);
  CHECK(t.finetune_rows.count(v.lookup("what")) == 1);   // freq 3
  CHECK(t.finetune_rows.count(v.lookup("holds")) == 1);  // freq 2
  set_finetune_top_n(t, {&q1}, 0);
  CHECK(t.finetune_rows.empty());
}

TEST_CASE("embedding table text format round trip") {
  Vocab v = Vocab::build({&kCtx});
  EmbeddingTable t = make_embedding_table(v, 3, 11, "t");
  const std::string path = "/tmp/fusion_test_emb.txt";
  save_embedding_table(path, t);
  EmbeddingTable loaded = load_embedding_table(path);
  CHECK(loaded.dim == 3);
  CHECK(loaded.vocab.index.size() == t.vocab.index.size());
  for (const auto& [token, row] : t.vocab.index) {
    const int lrow = loaded.vocab.lookup(token);
    for (int j = 0; j < 3; ++j)
      CHECK(loaded.matrix.at(lrow, j) == doctest::Approx(t.matrix.at(row, j)).epsilon(1e-14));
  }
  std::remove(path.c_str());
}

TEST_CASE("load_embedding_table appends a zero unk row when missing") {
  const std::string path = "/tmp/fusion_test_emb2.txt";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("cat 1.0 2.0\ndog 3.0 4.0\n", f);
    std::fclose(f);
  }
  EmbeddingTable t = load_embedding_table(path);
  CHECK(t.vocab.size() == 3);
  CHECK(t.matrix.at(t.vocab.unk, 0) == real_t(0));
  CHECK(t.matrix.at(t.vocab.lookup("dog"), 1) == real_t(4));
  std::remove(path.c_str());
}

TEST_CASE("contextualize is frozen and deterministic") {
  InputConfig cfg;
  cfg.word_dim = 6;
  cfg.ctx_dim = 8;
  cfg.pos_dim = 0;
  cfg.ner_dim = 0;
  EncoderParams p = params_for(cfg);
  Graph g;
  Tensor emb = embed_lookup(g, kCtx, p.words);
  Tensor a = contextualize(g, emb, p.contextualizer);
  Tensor b = contextualize(g, emb, p.contextualizer);
  CHECK(a.cols() == 8);
  CHECK(a.rows() == 5);
  CHECK(a.value() == b.value());
  bool any_grad = false;
  p.contextualizer.visit("", [&](const std::string&, Tensor& t) {
    any_grad = any_grad || t.requires_grad();
  });
  CHECK_FALSE(any_grad);
}

TEST_CASE("build_input_vectors dimension bookkeeping") {
  DropoutContext off;
  {
    // toy case: word 8, ctx 0, pos 2, ner 2, tf on -> 13; +em +word -> 22
    InputConfig cfg;
    cfg.word_dim = 8;
    cfg.ctx_dim = 0;
    cfg.pos_dim = 2;
    cfg.ner_dim = 2;
    CHECK(cfg.context_input_dim() == 13);
    CHECK(cfg.enhanced_context_dim() == 22);
    Graph g;
    EncoderParams p = params_for(cfg);
    EncodedInputs enc = build_input_vectors(g, example(), p, cfg, off);
    CHECK(enc.context_inputs.cols() == 13);
    CHECK(enc.enhanced_context.cols() == 22);
    CHECK(enc.question_inputs.cols() == 8);
    CHECK_FALSE(enc.ctx_c.defined());
    CHECK(enc.word_map.has_value());
  }
  {
    // full-scale dims: context 921, question 900
    InputConfig cfg;
    cfg.word_dim = 300;
    cfg.ctx_dim = 600;
    cfg.pos_dim = 12;
    cfg.ner_dim = 8;
    CHECK(cfg.context_input_dim() == 921);
    CHECK(cfg.question_input_dim() == 900);
    CHECK(cfg.enhanced_context_dim() == 921 + 1 + 300);
  }
}

TEST_CASE("dimension formulas hold over random configs") {
  DropoutContext off;
  for (int trial = 0; trial < 12; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial), 5);
    InputConfig cfg;
    cfg.word_dim = 2 + static_cast<int>(rng.next_below(6));
    cfg.ctx_dim = 2 * static_cast<int>(rng.next_below(4));
    cfg.pos_dim = static_cast<int>(rng.next_below(3));
    cfg.ner_dim = static_cast<int>(rng.next_below(3));
    cfg.use_tf = rng.next_below(2) == 1;
    cfg.use_em = rng.next_below(2) == 1;
    cfg.use_word_fusion = rng.next_below(2) == 1;
    Graph g;
    EncoderParams p = params_for(cfg, static_cast<std::uint64_t>(trial));
    EncodedInputs enc = build_input_vectors(g, example(), p, cfg, off);
    CHECK(enc.context_inputs.cols() == cfg.context_input_dim());
    CHECK(enc.enhanced_context.cols() == cfg.enhanced_context_dim());
    CHECK(enc.question_inputs.cols() == cfg.question_input_dim());
  }
}

TEST_CASE("disabling a feature removes exactly its slice") {
  DropoutContext off;
  InputConfig with;
  with.word_dim = 6;
  with.ctx_dim = 0;
  with.pos_dim = 2;
  with.ner_dim = 0;
  with.use_tf = true;
  with.use_em = false;
  with.use_word_fusion = false;
  InputConfig without = with;
  without.use_tf = false;

  EncoderParams p = params_for(with, 9);
  Graph g;
  EncodedInputs a = build_input_vectors(g, example(), p, with, off);
  EncodedInputs b = build_input_vectors(g, example(), p, without, off);
  CHECK(a.context_inputs.cols() == b.context_inputs.cols() + 1);
  // shared prefix (word + pos) must be untouched
  for (int i = 0; i < a.context_inputs.rows(); ++i)
    for (int j = 0; j < b.context_inputs.cols(); ++j)
      CHECK(a.context_inputs.at(i, j) == b.context_inputs.at(i, j));
}

TEST_CASE("missing tags with nonzero tag dims is a config error") {
  InputConfig cfg;
  cfg.word_dim = 4;
  cfg.ctx_dim = 0;
  cfg.pos_dim = 2;
  cfg.ner_dim = 0;
  EncoderParams p = params_for(cfg);
  MrcExample ex = example();
  ex.pos.clear();
  Graph g;
  DropoutContext off;
  CHECK_THROWS_AS(build_input_vectors(g, ex, p, cfg, off), ConfigError);
}

TEST_CASE("odd contextual width is rejected") {
  InputConfig cfg;
  cfg.ctx_dim = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

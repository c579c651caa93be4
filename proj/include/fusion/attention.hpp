#pragma once

#include <string>
#include <vector>

#include "fusion/rnn.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

// Attention scoring function catalogue. The symmetric family keeps its
// diagonal as a plain k-vector; the dense d_h x d_h product is never formed.
enum class ScorerKind {
  additive_mlp,             // s^T tanh(W1 x + W2 y)
  multiplicative,           // x^T U^T V y
  scaled_multiplicative,    // (1/sqrt(k)) x^T U^T V y
  scaled_multiplicative_nl, // (1/sqrt(k)) f(Ux)^T f(Vy)
  symmetric,                // x^T U^T D U y
  symmetric_nl,             // f(Ux)^T D f(Uy)
};

const char* scorer_name(ScorerKind kind);
ScorerKind scorer_from_name(const std::string& name);
bool scorer_is_symmetric(ScorerKind kind);

struct ScorerParams {
  ScorerKind kind = ScorerKind::symmetric_nl;
  int k = 0;    // attention hidden size
  int d_h = 0;  // key vector size
  Tensor u;     // k x d_h (every kind except additive)
  Tensor v;     // k x d_h (multiplicative family)
  Tensor d;     // k       (symmetric family diagonal, starts at ones)
  Tensor w1;    // k x d_h (additive)
  Tensor w2;    // k x d_h (additive)
  Tensor s;     // k       (additive)

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ScorerParams make_scorer(ScorerKind kind, int k, int d_h, std::uint64_t seed,
                         const std::string& scope);

// Score one key pair; returns a scalar tensor. The symmetric kinds use the
// same per-term reduction as the matrix path, so score(x,y) and score(y,x)
// are bitwise equal.
Tensor score(Graph& g, const ScorerParams& p, const Tensor& x, const Tensor& y);

// All-pairs scores: keys_a [m x d_h] x keys_b [n x d_h] -> [m x n].
Tensor score_matrix(Graph& g, const ScorerParams& p, const Tensor& keys_a,
                    const Tensor& keys_b);

// Row-stochastic snapshot of one attention application.
struct AttentionWeights {
  int rows = 0;
  int cols = 0;
  std::vector<real_t> weights;  // row-major
  std::string level_tag;

  real_t at(int i, int j) const { return weights[static_cast<std::size_t>(i) * cols + j]; }
};

struct FuseResult {
  Tensor attended;  // [m x value_dim]
  AttentionWeights weights;
};

// Attend keys_a into keys_b and sum values_b rows under the row softmax.
FuseResult fuse(Graph& g, const Tensor& keys_a, const Tensor& keys_b, const Tensor& values_b,
                const ScorerParams& p, std::string level_tag);

// Embedding-level fusion with the relu-bilinear score f(Wx)^T f(Wy); the
// attended output sums the other side's embeddings themselves.
FuseResult word_fusion(Graph& g, const Tensor& ctx_emb, const Tensor& other_emb,
                       const Tensor& w, std::string level_tag = "word");

// 1.0 where the lowercased token appears in the question, else 0.0.
std::vector<real_t> exact_match_feature(const std::vector<std::string>& context_tokens,
                                        const std::vector<std::string>& question_tokens);

// Lowercased occurrence count of each token divided by the context length.
std::vector<real_t> term_frequency(const std::vector<std::string>& context_tokens);

}  // namespace fusion

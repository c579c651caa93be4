#include "fusion/attention.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "fusion/rng.hpp"

namespace fusion {

namespace {

Tensor fan_in_param(const Shape& shape, std::uint64_t seed, const std::string& name) {
  return init_param(shape, InitScheme::uniform_fan_in, seed, Rng::stream_key(name.c_str()));
}

std::string lower_ascii(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

const char* scorer_name(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::additive_mlp:
      return "additive_mlp";
    case ScorerKind::multiplicative:
      return "multiplicative";
    case ScorerKind::scaled_multiplicative:
      return "scaled_multiplicative";
    case ScorerKind::scaled_multiplicative_nl:
      return "scaled_multiplicative_nl";
    case ScorerKind::symmetric:
      return "symmetric";
    case ScorerKind::symmetric_nl:
      return "symmetric_nl";
  }
  return "?";
}

ScorerKind scorer_from_name(const std::string& name) {
  for (auto kind : {ScorerKind::additive_mlp, ScorerKind::multiplicative,
                    ScorerKind::scaled_multiplicative, ScorerKind::scaled_multiplicative_nl,
                    ScorerKind::symmetric, ScorerKind::symmetric_nl})
    if (name == scorer_name(kind)) return kind;
  throw ConfigError("unknown scorer kind: " + name);
}

bool scorer_is_symmetric(ScorerKind kind) {
  return kind == ScorerKind::symmetric || kind == ScorerKind::symmetric_nl;
}

void ScorerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  switch (kind) {
    case ScorerKind::additive_mlp:
      fn(prefix + ".w1", w1);
      fn(prefix + ".w2", w2);
      fn(prefix + ".s", s);
      break;
    case ScorerKind::multiplicative:
    case ScorerKind::scaled_multiplicative:
    case ScorerKind::scaled_multiplicative_nl:
      fn(prefix + ".u", u);
      fn(prefix + ".v", v);
      break;
    case ScorerKind::symmetric:
    case ScorerKind::symmetric_nl:
      fn(prefix + ".u", u);
      fn(prefix + ".d", d);
      break;
  }
}

ScorerParams make_scorer(ScorerKind kind, int k, int d_h, std::uint64_t seed,
                         const std::string& scope) {
  if (k < 1 || d_h < 1) throw ConfigError("scorer dims must be positive: " + scope);
  ScorerParams p;
  p.kind = kind;
  p.k = k;
  p.d_h = d_h;
  switch (kind) {
    case ScorerKind::additive_mlp:
      p.w1 = fan_in_param({k, d_h}, seed, scope + ".w1");
      p.w2 = fan_in_param({k, d_h}, seed, scope + ".w2");
      p.s = fan_in_param({k}, seed, scope + ".s");
      break;
    case ScorerKind::multiplicative:
    case ScorerKind::scaled_multiplicative:
    case ScorerKind::scaled_multiplicative_nl:
      p.u = fan_in_param({k, d_h}, seed, scope + ".u");
      p.v = fan_in_param({k, d_h}, seed, scope + ".v");
      break;
    case ScorerKind::symmetric:
    case ScorerKind::symmetric_nl:
      p.u = fan_in_param({k, d_h}, seed, scope + ".u");
      // identity-like start: the score begins as a relu-cosine similarity
      p.d = init_param({k}, InitScheme::ones, seed);
      break;
  }
  return p;
}

namespace {

void check_key(const ScorerParams& p, const Tensor& x, const char* what) {
  if (x.rank() != 1 || x.dim(0) != p.d_h)
    throw ShapeError(std::string("score: ") + what + " has shape " + shape_str(x.shape()) +
                     ", expected length " + std::to_string(p.d_h));
}

real_t inv_sqrt_k(const ScorerParams& p) {
  return static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(p.k)));
}

}  // namespace

Tensor score(Graph& g, const ScorerParams& p, const Tensor& x, const Tensor& y) {
  check_key(p, x, "x");
  check_key(p, y, "y");
  switch (p.kind) {
    case ScorerKind::additive_mlp: {
      Tensor t = g.activation(g.add(g.matvec(p.w1, x), g.matvec(p.w2, y)), Act::tanh_fn);
      return g.dot(p.s, t);
    }
    case ScorerKind::multiplicative:
      return g.dot(g.matvec(p.u, x), g.matvec(p.v, y));
    case ScorerKind::scaled_multiplicative:
      return g.scale(g.dot(g.matvec(p.u, x), g.matvec(p.v, y)), inv_sqrt_k(p));
    case ScorerKind::scaled_multiplicative_nl:
      return g.scale(g.dot(g.activation(g.matvec(p.u, x), Act::relu),
                           g.activation(g.matvec(p.v, y), Act::relu)),
                     inv_sqrt_k(p));
    case ScorerKind::symmetric: {
      Tensor zx = g.stack_rows({g.matvec(p.u, x)});
      Tensor zy = g.stack_rows({g.matvec(p.u, y)});
      return g.sum(g.sym_scores(zx, zy, p.d));
    }
    case ScorerKind::symmetric_nl: {
      Tensor zx = g.stack_rows({g.activation(g.matvec(p.u, x), Act::relu)});
      Tensor zy = g.stack_rows({g.activation(g.matvec(p.u, y), Act::relu)});
      return g.sum(g.sym_scores(zx, zy, p.d));
    }
  }
  throw ContractError("unreachable scorer kind");
}

Tensor score_matrix(Graph& g, const ScorerParams& p, const Tensor& keys_a,
                    const Tensor& keys_b) {
  if (keys_a.rank() != 2 || keys_b.rank() != 2 || keys_a.cols() != p.d_h ||
      keys_b.cols() != p.d_h)
    throw ShapeError("score_matrix: keys must be [n x " + std::to_string(p.d_h) + "]");
  switch (p.kind) {
    case ScorerKind::additive_mlp: {
      // per-row projection, then pairwise tanh mlp
      Tensor pa = g.matmul_nt(keys_a, p.w1);  // [m x k]
      Tensor pb = g.matmul_nt(keys_b, p.w2);  // [n x k]
      std::vector<Tensor> rows;
      rows.reserve(static_cast<std::size_t>(keys_a.rows()));
      for (int i = 0; i < keys_a.rows(); ++i) {
        Tensor t = g.activation(g.add_rowvec(pb, g.row(pa, i)), Act::tanh_fn);
        rows.push_back(g.matvec(t, p.s));
      }
      return g.stack_rows(rows);
    }
    case ScorerKind::multiplicative:
      return g.matmul_nt(g.matmul_nt(keys_a, p.u), g.matmul_nt(keys_b, p.v));
    case ScorerKind::scaled_multiplicative:
      return g.scale(g.matmul_nt(g.matmul_nt(keys_a, p.u), g.matmul_nt(keys_b, p.v)),
                     inv_sqrt_k(p));
    case ScorerKind::scaled_multiplicative_nl:
      return g.scale(g.matmul_nt(g.activation(g.matmul_nt(keys_a, p.u), Act::relu),
                                 g.activation(g.matmul_nt(keys_b, p.v), Act::relu)),
                     inv_sqrt_k(p));
    case ScorerKind::symmetric:
      return g.sym_scores(g.matmul_nt(keys_a, p.u), g.matmul_nt(keys_b, p.u), p.d);
    case ScorerKind::symmetric_nl:
      return g.sym_scores(g.activation(g.matmul_nt(keys_a, p.u), Act::relu),
                          g.activation(g.matmul_nt(keys_b, p.u), Act::relu), p.d);
  }
  throw ContractError("unreachable scorer kind");
}

namespace {

FuseResult fuse_with_scores(Graph& g, const Tensor& scores, const Tensor& values_b,
                            std::string level_tag) {
  Tensor alpha = g.softmax_rows(scores);
  Tensor attended = g.matmul(alpha, values_b);
  AttentionWeights w;
  w.rows = alpha.rows();
  w.cols = alpha.cols();
  w.weights = alpha.value();
  w.level_tag = std::move(level_tag);
  return FuseResult{attended, std::move(w)};
}

}  // namespace

FuseResult fuse(Graph& g, const Tensor& keys_a, const Tensor& keys_b, const Tensor& values_b,
                const ScorerParams& p, std::string level_tag) {
  if (values_b.rank() != 2 || values_b.rows() != keys_b.rows())
    throw ShapeError("fuse: values_b rows must match keys_b rows");
  if (keys_b.rows() < 1) throw EmptySupportError("fuse: empty attended body");
  return fuse_with_scores(g, score_matrix(g, p, keys_a, keys_b), values_b,
                          std::move(level_tag));
}

FuseResult word_fusion(Graph& g, const Tensor& ctx_emb, const Tensor& other_emb,
                       const Tensor& w, std::string level_tag) {
  if (w.rank() != 2 || w.rows() != w.cols()) throw ShapeError("word_fusion: W must be square");
  if (ctx_emb.cols() != w.cols() || other_emb.cols() != w.cols())
    throw ShapeError("word_fusion: embedding dim must equal W's order");
  if (other_emb.rows() < 1) throw EmptySupportError("word_fusion: empty attended body");
  Tensor pa = g.activation(g.matmul_nt(ctx_emb, w), Act::relu);
  Tensor pb = g.activation(g.matmul_nt(other_emb, w), Act::relu);
  return fuse_with_scores(g, g.matmul_nt(pa, pb), other_emb, std::move(level_tag));
}

std::vector<real_t> exact_match_feature(const std::vector<std::string>& context_tokens,
                                        const std::vector<std::string>& question_tokens) {
  std::unordered_set<std::string> qset;
  for (const auto& t : question_tokens) qset.insert(lower_ascii(t));
  std::vector<real_t> out;
  out.reserve(context_tokens.size());
  for (const auto& t : context_tokens)
    out.push_back(qset.count(lower_ascii(t)) ? real_t(1) : real_t(0));
  return out;
}

std::vector<real_t> term_frequency(const std::vector<std::string>& context_tokens) {
  if (context_tokens.empty()) throw EmptyInputError("term_frequency: empty context");
  std::unordered_map<std::string, int> counts;
  std::vector<std::string> lowered;
  lowered.reserve(context_tokens.size());
  for (const auto& t : context_tokens) {
    lowered.push_back(lower_ascii(t));
    ++counts[lowered.back()];
  }
  std::vector<real_t> out;
  out.reserve(context_tokens.size());
  const real_t m = static_cast<real_t>(context_tokens.size());
  for (const auto& t : lowered) out.push_back(static_cast<real_t>(counts[t]) / m);
  return out;
}

}  // namespace fusion

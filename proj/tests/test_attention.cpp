#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fusion/attention.hpp"
#include "fusion/rng.hpp"

using namespace fusion;

namespace {

Tensor random_matrix(int rows, int cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& v : t.value()) v = static_cast<real_t>(rng.uniform(lo, hi));
  return t;
}

Tensor random_vector(int n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros({n});
  for (auto& v : t.value()) v = static_cast<real_t>(rng.uniform(lo, hi));
  return t;
}

void randomize(ScorerParams& p, Rng& rng) {
  p.visit("", [&rng](const std::string&, Tensor& t) {
    for (auto& v : t.value()) v = static_cast<real_t>(rng.uniform(-1.0, 1.0));
  });
}

}  // namespace

TEST_CASE("score hand-evaluated cases") {
  Graph g;

  ScorerParams sym = make_scorer(ScorerKind::symmetric_nl, 2, 2, 0, "t");
  sym.u.value() = {1, 0, 0, 1};
  sym.d.value() = {1, 1};
  // relu([1,-1]) . relu([2,3]) = [1,0] . [2,3] = 2
  CHECK(score(g, sym, Tensor::vec({1, -1}), Tensor::vec({2, 3})).item() ==
        doctest::Approx(2.0).epsilon(1e-15));

  ScorerParams add = make_scorer(ScorerKind::additive_mlp, 3, 2, 0, "t");
  std::fill(add.s.value().begin(), add.s.value().end(), real_t(0));
  CHECK(score(g, add, Tensor::vec({1, 2}), Tensor::vec({-3, 4})).item() == real_t(0));

  ScorerParams mult = make_scorer(ScorerKind::multiplicative, 2, 2, 0, "t");
  mult.u.value() = {1, 0, 0, 1};
  mult.v.value() = {1, 0, 0, 1};
  CHECK(score(g, mult, Tensor::vec({1, 2}), Tensor::vec({3, 4})).item() ==
        doctest::Approx(11.0).epsilon(1e-15));

  CHECK_THROWS_AS(score(g, mult, Tensor::vec({1, 2, 3}), Tensor::vec({1, 2})), ShapeError);
}

TEST_CASE("scaled kinds divide by sqrt of the configured k") {
  Graph g;
  Rng rng(3, 0);
  const int k = 5, dh = 3;  // deliberately k != d_h
  ScorerParams plain = make_scorer(ScorerKind::multiplicative, k, dh, 7, "t");
  ScorerParams scaled = make_scorer(ScorerKind::scaled_multiplicative, k, dh, 7, "t");
  scaled.u.value() = plain.u.value();
  scaled.v.value() = plain.v.value();
  Tensor x = random_vector(dh, rng), y = random_vector(dh, rng);
  const double a = score(g, plain, x, y).item();
  const double b = score(g, scaled, x, y).item();
  CHECK(b == doctest::Approx(a / std::sqrt(5.0)).epsilon(1e-12));
}

TEST_CASE("score_matrix agrees with per-pair score for every kind") {
  Rng rng(4, 0);
  const int m = 3, n = 4, k = 5, dh = 6;
  for (auto kind : {ScorerKind::additive_mlp, ScorerKind::multiplicative,
                    ScorerKind::scaled_multiplicative, ScorerKind::scaled_multiplicative_nl,
                    ScorerKind::symmetric, ScorerKind::symmetric_nl}) {
    ScorerParams p = make_scorer(kind, k, dh, 19, "t");
    randomize(p, rng);
    Tensor a = random_matrix(m, dh, rng);
    Tensor b = random_matrix(n, dh, rng);
    Graph g;
    Tensor s = score_matrix(g, p, a, b);
    REQUIRE(s.rows() == m);
    REQUIRE(s.cols() == n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        Graph g2;
        const double by_pair = score(g2, p, g2.row(a, i), g2.row(b, j)).item();
        INFO(scorer_name(kind));
        CHECK(s.at(i, j) == doctest::Approx(by_pair).epsilon(1e-12));
      }
  }
}

TEST_CASE("symmetric kinds are exactly symmetric over 1000 trials") {
  for (auto kind : {ScorerKind::symmetric, ScorerKind::symmetric_nl}) {
    for (int trial = 0; trial < 1000; ++trial) {
      Rng rng(static_cast<std::uint64_t>(trial), 50 + static_cast<int>(kind));
      ScorerParams p = make_scorer(kind, 4, 5, static_cast<std::uint64_t>(trial), "t");
      randomize(p, rng);
      Tensor x = random_vector(5, rng);
      Tensor y = random_vector(5, rng);
      Graph g;
      const real_t sxy = static_cast<real_t>(score(g, p, x, y).item());
      const real_t syx = static_cast<real_t>(score(g, p, y, x).item());
      CHECK(sxy == syx);  // bitwise
    }
  }
}

TEST_CASE("symmetric family stores the diagonal as a k-vector") {
  ScorerParams p = make_scorer(ScorerKind::symmetric_nl, 7, 31, 0, "t");
  CHECK(p.d.shape() == Shape{7});
  CHECK(p.u.shape() == Shape{7, 31});
  CHECK_FALSE(p.v.defined());  // no second projection, no dense d_h x d_h product
  std::size_t total = 0;
  p.visit("", [&total](const std::string&, Tensor& t) { total += t.size(); });
  CHECK(total == 7u * 31u + 7u);
}

TEST_CASE("negative diagonal scores dissimilar inputs high") {
  Graph g;
  ScorerParams p = make_scorer(ScorerKind::symmetric, 1, 1, 0, "t");
  p.u.value() = {1};
  p.d.value() = {-1};
  const double s = score(g, p, Tensor::vec({1}), Tensor::vec({-1})).item();
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));  // cos(x,y) = -1 yet score > 0
}

TEST_CASE("fuse limit cases") {
  Graph g;
  // zero projections: every score is 0, attention is the exact mean
  ScorerParams p = make_scorer(ScorerKind::symmetric_nl, 2, 2, 0, "t");
  std::fill(p.u.value().begin(), p.u.value().end(), real_t(0));
  Tensor keys_a = Tensor::mat(1, 2, {1, 1});
  Tensor keys_b = Tensor::mat(3, 2, {0, 0, 1, 1, 2, 2});
  Tensor values = Tensor::mat(3, 2, {3, 0, 6, 3, 0, 0});
  FuseResult r = fuse(g, keys_a, keys_b, values, p, "test");
  CHECK(r.attended.at(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.attended.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

  // n = 1: the single value is copied with weight exactly 1
  FuseResult single = fuse(g, keys_a, Tensor::mat(1, 2, {4, 5}), Tensor::mat(1, 2, {7, -2}), p,
                           "test");
  CHECK(single.weights.at(0, 0) == real_t(1));
  CHECK(single.attended.at(0, 0) == real_t(7));
  CHECK(single.attended.at(0, 1) == real_t(-2));
}

TEST_CASE("a score dominating by 50 saturates the softmax") {
  Graph g;
  ScorerParams p = make_scorer(ScorerKind::symmetric, 1, 1, 0, "t");
  p.u.value() = {1};
  p.d.value() = {1};
  Tensor keys_a = Tensor::mat(1, 1, {1});
  Tensor keys_b = Tensor::mat(2, 1, {50, 0});
  Tensor values = Tensor::mat(2, 1, {7, -3});
  FuseResult r = fuse(g, keys_a, keys_b, values, p, "test");
  CHECK(std::abs(r.attended.at(0, 0) - real_t(7)) <= real_t(7) * real_t(1e-15));
}

TEST_CASE("fuse weights are row-stochastic and attended stays in the hull") {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial), 99);
    ScorerParams p = make_scorer(ScorerKind::symmetric_nl, 4, 6,
                                 static_cast<std::uint64_t>(trial), "t");
    randomize(p, rng);
    Tensor keys_a = random_matrix(3, 6, rng);
    Tensor keys_b = random_matrix(5, 6, rng);
    Tensor values = random_matrix(5, 4, rng);
    Graph g;
    FuseResult r = fuse(g, keys_a, keys_b, values, p, "test");
    for (int i = 0; i < r.weights.rows; ++i) {
      real_t sum = 0;
      for (int j = 0; j < r.weights.cols; ++j) {
        const real_t w = r.weights.at(i, j);
        CHECK(w >= real_t(0));
        CHECK(w <= real_t(1));
        sum += w;
      }
      CHECK(std::abs(sum - real_t(1)) <= real_t(1e-9));
    }
    for (int j = 0; j < values.cols(); ++j) {
      real_t lo = values.at(0, j), hi = values.at(0, j);
      for (int i = 1; i < values.rows(); ++i) {
        lo = std::min(lo, values.at(i, j));
        hi = std::max(hi, values.at(i, j));
      }
      for (int i = 0; i < r.attended.rows(); ++i) {
        CHECK(r.attended.at(i, j) >= lo - real_t(1e-12));
        CHECK(r.attended.at(i, j) <= hi + real_t(1e-12));
      }
    }
  }
}

TEST_CASE("softmax row argmax is invariant to constant score shifts") {
  for (int trial = 0; trial < 30; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial), 123);
    Tensor s = random_matrix(4, 6, rng, -3.0, 3.0);
    Tensor shifted = Tensor::zeros(s.shape());
    for (int i = 0; i < 4; ++i) {
      const real_t c = static_cast<real_t>(rng.uniform(-20.0, 20.0));
      for (int j = 0; j < 6; ++j)
        shifted.value()[i * 6 + j] = s.value()[i * 6 + j] + c;
    }
    Graph g;
    Tensor a = g.softmax_rows(s);
    Tensor b = g.softmax_rows(shifted);
    for (int i = 0; i < 4; ++i) {
      int arga = 0, argb = 0;
      for (int j = 1; j < 6; ++j) {
        if (a.at(i, j) > a.at(i, arga)) arga = j;  // ties: lowest index wins
        if (b.at(i, j) > b.at(i, argb)) argb = j;
      }
      CHECK(arga == argb);
    }
  }
}

TEST_CASE("word_fusion hand-evaluated case") {
  Graph g;
  Tensor w = Tensor::mat(2, 2, {1, 0, 0, 1});
  Tensor ctx = Tensor::mat(1, 2, {1, 0});
  Tensor q = Tensor::mat(2, 2, {1, 0, 0, 1});
  FuseResult r = word_fusion(g, ctx, q, w);
  // scores {1, 0}: weights {e/(e+1), 1/(e+1)}
  const double e = std::exp(1.0);
  CHECK(r.weights.at(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(r.weights.at(0, 1) == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
  CHECK(r.attended.at(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-9));
  CHECK(r.attended.at(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-9));
}

TEST_CASE("word_fusion limit cases") {
  Graph g;
  Rng rng(9, 0);
  Tensor w = random_matrix(3, 3, rng);

  // identical question words: convexity keeps the word itself
  Tensor ctx = random_matrix(2, 3, rng);
  Tensor q_same = Tensor::mat(3, 3, {0.5, -1, 2, 0.5, -1, 2, 0.5, -1, 2});
  FuseResult same = word_fusion(g, ctx, q_same, w);
  for (int i = 0; i < 2; ++i) {
    CHECK(same.attended.at(i, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(same.attended.at(i, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(same.attended.at(i, 2) == doctest::Approx(2.0).epsilon(1e-12));
  }

  // zero W: uniform average of the question embeddings
  Tensor zero = Tensor::zeros({3, 3});
  Tensor q = random_matrix(4, 3, rng);
  FuseResult uni = word_fusion(g, ctx, q, zero);
  for (int j = 0; j < 3; ++j) {
    real_t mean = 0;
    for (int i = 0; i < 4; ++i) mean += q.at(i, j);
    mean /= 4;
    CHECK(uni.attended.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("exact_match_feature") {
  CHECK(exact_match_feature({"the", "rhine", "flows"}, {"rhine"}) ==
        std::vector<real_t>{0, 1, 0});
  CHECK(exact_match_feature({"a", "b"}, {}) == std::vector<real_t>{0, 0});
  CHECK(exact_match_feature({"Rhine"}, {"rhine"}) == std::vector<real_t>{1});
}

TEST_CASE("term_frequency") {
  CHECK(term_frequency({"a", "a", "b"}) ==
        std::vector<real_t>{real_t(2) / 3, real_t(2) / 3, real_t(1) / 3});
  CHECK(term_frequency({"w", "x", "y", "z"}) == std::vector<real_t>(4, real_t(0.25)));
  CHECK(term_frequency({"only"}) == std::vector<real_t>{1});
  CHECK_THROWS_AS(term_frequency({}), EmptyInputError);
}

TEST_CASE("fuse gradients flow through scores and values") {
  Rng rng(15, 0);
  ScorerParams p = make_scorer(ScorerKind::symmetric_nl, 3, 4, 2, "t");
  Tensor keys_a = random_matrix(2, 4, rng);
  Tensor keys_b = random_matrix(3, 4, rng);
  Tensor values = random_matrix(3, 2, rng);
  keys_a.set_requires_grad(true);
  keys_b.set_requires_grad(true);
  values.set_requires_grad(true);
  std::vector<Tensor> params{keys_a, keys_b, values, p.u, p.d};
  auto f = [&](Graph& g) {
    FuseResult r = fuse(g, keys_a, keys_b, values, p, "t");
    Tensor w = Tensor::zeros(r.attended.shape());
    Rng wr(3, 3);
    for (auto& v : w.value()) v = static_cast<real_t>(wr.uniform(-1.0, 1.0));
    return g.sum(g.mul(r.attended, w));
  };
  CHECK(grad_check(f, params, {.eps = 1e-5}) < 1e-5);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "partmatch/cmpm.hpp"
#include "partmatch/errors.hpp"
#include "partmatch/features.hpp"
#include "partmatch/ops.hpp"
#include "test_support.hpp"

using namespace partmatch;
using testing::random_tensor;

namespace {

constexpr double kEps = 1e-8;

using Matrix = std::vector<std::vector<double>>;

Matrix rows(const Tensor& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

// Scalar re-implementation of one direction: anchors a, projected side b.
double oracle_direction(const Matrix& a, const Matrix& b, const Matrix& y) {
  const std::size_t n = a.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0, norm = 0.0;
      for (std::size_t c = 0; c < b[j].size(); ++c) {
        dot += a[i][c] * b[j][c];
        norm += b[j][c] * b[j][c];
      }
      logits[j] = dot / std::sqrt(norm);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    double ysum = 0.0;
    for (double v : y[i]) ysum += v;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(logits[j]) / z;
      const double q = y[i][j] / ysum;
      if (p > 0.0) loss += p * std::log(p / (q + kEps));
    }
  }
  return loss / static_cast<double>(n);
}

Matrix transpose(const Matrix& m) {
  Matrix t(m[0].size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t[j][i] = m[i][j];
  return t;
}

MatchLabels labels_for(const std::vector<int>& ids) { return MatchLabels::from_identities(ids, ids); }

double row_sum(const Tensor& m, std::size_t r) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.dim(1); ++j) s += m.at(r, j);
  return s;
}

FeatureSet random_set(Rng& rng, std::size_t n, std::size_t k, std::size_t c1, std::size_t c2) {
  FeatureSet fs;
  fs.low = Var(random_tensor(Shape{n, c1}, rng));
  for (std::size_t i = 0; i < k; ++i) fs.parts.emplace_back(random_tensor(Shape{n, c2}, rng));
  fs.global = fuse(fs.parts, Pooling::Max);
  return fs;
}

}  // namespace

TEST_SUITE("labels") {
  TEST_CASE("construction from identities") {
    const std::vector<int> ids{3, 1, 3, 2};
    const auto y = labels_for(ids).y;
    CHECK(y.at(0, 2) == 1.0);
    CHECK(y.at(2, 0) == 1.0);
    CHECK(y.at(0, 1) == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i, i) == 1.0);
  }

  TEST_CASE("validation") {
    MatchLabels bad{Tensor::matrix(2, 2, {1, 0, 0, 0})};
    CHECK_THROWS_AS(bad.validate(), LabelError);
    MatchLabels nonbinary{Tensor::matrix(2, 2, {1, 0.5, 0, 1})};
    CHECK_THROWS_AS(nonbinary.validate(), LabelError);
    MatchLabels rect{Tensor(Shape{2, 3}, 1.0)};
    CHECK_THROWS_AS(rect.validate(), LabelError);
  }

  TEST_CASE("true match distribution") {
    const Tensor q = true_match_distribution(MatchLabels{Tensor::matrix(3, 3, {1, 0, 1, 0, 1, 0, 1, 1, 1})});
    CHECK(q.at(0, 0) == 0.5);
    CHECK(q.at(0, 1) == 0.0);
    CHECK(q.at(0, 2) == 0.5);
    CHECK(q.at(2, 1) == doctest::Approx(1.0 / 3.0));
    const Tensor eye = true_match_distribution(labels_for({0, 1, 2}));
    CHECK(eye == Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    const Tensor uniform = true_match_distribution(labels_for({5, 5, 5, 5}));
    for (double v : uniform.data()) CHECK(v == 0.25);
    CHECK_THROWS_AS(true_match_distribution(MatchLabels{Tensor::matrix(2, 2, {0, 0, 0, 1})}), LabelError);
  }

  TEST_CASE("weights and variants") {
    const auto a = LossWeights::variant('a');
    CHECK((a.low == 0 && a.local == 1 && a.global == 0));
    const auto b = LossWeights::variant('b');
    CHECK((b.low == 0 && b.local == 0 && b.global == 1));
    const auto c = LossWeights::variant('c');
    CHECK((c.low == 1 && c.local == 1 && c.global == 0));
    const auto d = LossWeights::variant('d');
    CHECK((d.low == 1 && d.local == 0 && d.global == 1));
    const auto e = LossWeights::variant('e');
    CHECK((e.low == 0 && e.local == 1 && e.global == 1));
    const auto f = LossWeights::variant('f');
    CHECK((f.low == 1 && f.local == 1 && f.global == 1));
    CHECK_THROWS_AS(LossWeights::variant('g'), ConfigError);
    CHECK_THROWS_AS((LossWeights{0, 0, 0, 1e-8}.validate()), ConfigError);
    CHECK_THROWS_AS((LossWeights{1, 1, 1, 0}.validate()), ConfigError);
  }
}

TEST_SUITE("match probabilities") {
  TEST_CASE("two-by-two example") {
    const Tensor p = match_probabilities(Var(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                                         Var(Tensor::matrix(2, 2, {2, 0, 0, 2})))
                         .value();
    CHECK(p.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(p.at(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(p.at(1, 0) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(p.at(1, 1) == doctest::Approx(0.7311).epsilon(1e-4));
  }

  TEST_CASE("zero image rows give uniform rows; N=1 gives 1") {
    Rng rng(1);
    const Tensor p = match_probabilities(Var(Tensor(Shape{3, 4}, 0.0)), Var(random_tensor(Shape{3, 4}, rng))).value();
    for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const Tensor one = match_probabilities(Var(random_tensor(Shape{1, 4}, rng)), Var(random_tensor(Shape{1, 4}, rng))).value();
    CHECK(one.at(0, 0) == 1.0);
  }

  TEST_CASE("zero text row is a numeric error") {
    Tensor txt(Shape{2, 3}, 1.0);
    txt.at(1, 0) = txt.at(1, 1) = txt.at(1, 2) = 0.0;
    CHECK_THROWS_AS(match_probabilities(Var(Tensor(Shape{2, 3}, 1.0)), Var(txt)), NumericError);
  }

  TEST_CASE("rows of p and q are stochastic") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + rng.below(7);
      const Tensor p = match_probabilities(Var(random_tensor(Shape{n, 5}, rng, -5, 5)),
                                           Var(random_tensor(Shape{n, 5}, rng, -5, 5)))
                           .value();
      std::vector<int> ids(n);
      for (auto& id : ids) id = static_cast<int>(rng.below(3));
      const Tensor q = true_match_distribution(labels_for(ids));
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(row_sum(p, i) - 1.0) < 1e-9);
        CHECK(std::abs(row_sum(q, i) - 1.0) < 1e-9);
      }
    }
  }

  TEST_CASE("positive rescaling of a text row leaves p unchanged") {
    Rng rng(3);
    const Tensor img = random_tensor(Shape{5, 6}, rng);
    Tensor txt = random_tensor(Shape{5, 6}, rng);
    const Tensor before = match_probabilities(Var(img), Var(txt)).value();
    for (std::size_t r = 0; r < 5; ++r) {
      const double s = rng.uniform(0.01, 100.0);
      for (std::size_t c = 0; c < 6; ++c) txt.at(r, c) *= s;
    }
    const Tensor after = match_probabilities(Var(img), Var(txt)).value();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(before[i] - after[i]) < 1e-9);
  }
}

TEST_SUITE("one direction") {
  TEST_CASE("identical distributions give (almost) zero") {
    Rng rng(4);
    const Tensor q = true_match_distribution(labels_for({0, 1, 0, 2, 1}));
    CHECK(std::abs(cmpm_one_direction(Var(q), q, kEps).value().item()) < 1e-6);
    const Tensor p = match_probabilities(Var(random_tensor(Shape{4, 3}, rng)), Var(random_tensor(Shape{4, 3}, rng))).value();
    CHECK(std::abs(cmpm_one_direction(Var(p), p, kEps).value().item()) < 1e-6);
  }

  TEST_CASE("uniform p against one-hot q for N=2") {
    const Tensor p(Shape{2, 2}, 0.5);
    const Tensor q = Tensor::matrix(2, 2, {1, 0, 0, 1});
    // Per row 0.5 ln(0.5 / (1 + 1e-8)) + 0.5 ln(0.5 / 1e-8), two rows over N = 2.
    const double want = 0.5 * std::log(0.5 / (1.0 + kEps)) + 0.5 * std::log(0.5 / kEps);
    CHECK(want == doctest::Approx(8.517).epsilon(1e-4));
    CHECK(std::abs(cmpm_one_direction(Var(p), q, kEps).value().item() - want) < 1e-3);
    CHECK(cmpm_one_direction(Var(p), q, kEps).value().item() == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("entropy identity for uniform q") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + rng.below(6);
      const Tensor p = match_probabilities(Var(random_tensor(Shape{n, 4}, rng, -3, 3)),
                                           Var(random_tensor(Shape{n, 4}, rng, -3, 3)))
                           .value();
      const Tensor q(Shape{n, n}, 1.0 / static_cast<double>(n));
      double neg_entropy = 0.0;
      for (double v : p.data()) neg_entropy += v * std::log(v);
      const double want = neg_entropy / static_cast<double>(n) - std::log(1.0 / static_cast<double>(n) + kEps);
      const double got = cmpm_one_direction(Var(p), q, kEps).value().item();
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
      CHECK(got >= -std::log(static_cast<double>(n)) - 1e-7);
    }
  }

  TEST_CASE("zero probabilities contribute nothing") {
    const Tensor p = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Tensor q = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const double got = cmpm_one_direction(Var(p), q, kEps).value().item();
    CHECK(std::isfinite(got));
    CHECK(std::abs(got) < 1e-6);
  }

  TEST_CASE("negative entries are rejected") {
    const Tensor p = Tensor::matrix(2, 2, {1.1, -0.1, 0.5, 0.5});
    const Tensor q = Tensor::matrix(2, 2, {1, 0, 0, 1});
    CHECK_THROWS_AS(cmpm_one_direction(Var(p), q, kEps), NumericError);
  }
}

TEST_SUITE("bidirectional") {
  TEST_CASE("matches the scalar oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor img = random_tensor(Shape{4, 8}, rng, -2, 2);
      const Tensor txt = random_tensor(Shape{4, 8}, rng, -2, 2);
      std::vector<int> ids(4);
      for (auto& id : ids) id = static_cast<int>(rng.below(3));
      const MatchLabels labels = labels_for(ids);
      const Matrix y = rows(labels.y);
      const double want = oracle_direction(rows(img), rows(txt), y) + oracle_direction(rows(txt), rows(img), transpose(y));
      const double got = cmpm_bidirectional(Var(img), Var(txt), labels, kEps).value().item();
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }

  TEST_CASE("swapping modalities swaps the directional terms exactly") {
    Rng rng(7);
    const Var img(random_tensor(Shape{5, 6}, rng));
    const Var txt(random_tensor(Shape{5, 6}, rng));
    const MatchLabels y = labels_for({0, 1, 0, 2, 2});
    const double i2t = cmpm_one_direction(match_probabilities(img, txt), true_match_distribution(y), kEps).value().item();
    const double t2i = cmpm_one_direction(match_probabilities(txt, img), true_match_distribution(y.transposed()), kEps)
                           .value()
                           .item();
    const double fwd = cmpm_bidirectional(img, txt, y, kEps).value().item();
    const double rev = cmpm_bidirectional(txt, img, y.transposed(), kEps).value().item();
    CHECK(fwd == i2t + t2i);
    CHECK(rev == t2i + i2t);
    CHECK(fwd == rev);
  }

  TEST_CASE("scaling every text row changes only the text-to-image term") {
    Rng rng(8);
    const Var img(random_tensor(Shape{4, 5}, rng));
    const Tensor txt = random_tensor(Shape{4, 5}, rng);
    Tensor txt5 = txt;
    for (auto& v : txt5.data()) v *= 5.0;
    const MatchLabels y = labels_for({0, 1, 2, 3});
    const Tensor q = true_match_distribution(y);
    const double i2t = cmpm_one_direction(match_probabilities(img, Var(txt)), q, kEps).value().item();
    const double i2t5 = cmpm_one_direction(match_probabilities(img, Var(txt5)), q, kEps).value().item();
    CHECK(std::abs(i2t - i2t5) < 1e-9);
    const double t2i = cmpm_one_direction(match_probabilities(Var(txt), img), q, kEps).value().item();
    const double t2i5 = cmpm_one_direction(match_probabilities(Var(txt5), img), q, kEps).value().item();
    CHECK(std::abs(t2i - t2i5) > 1e-3);
  }

  TEST_CASE("loss is bounded below") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 1 + rng.below(6);
      std::vector<int> ids(n);
      for (auto& id : ids) id = static_cast<int>(rng.below(3));
      const double v = cmpm_bidirectional(Var(random_tensor(Shape{n, 4}, rng, -4, 4)),
                                          Var(random_tensor(Shape{n, 4}, rng, -4, 4)), labels_for(ids), kEps)
                           .value()
                           .item();
      CHECK(v >= -1e-6);
    }
  }

  TEST_CASE("gradients against central differences") {
    Rng rng(10);
    testing::FdHarness h;
    Var img = h.leaf("img", random_tensor(Shape{4, 6}, rng));
    Var txt = h.leaf("txt", random_tensor(Shape{4, 6}, rng));
    const MatchLabels y = labels_for({0, 1, 0, 2});
    const auto rep = h.check([&] { return cmpm_bidirectional(img, txt, y, kEps); });
    CHECK_MESSAGE(rep.passed, rep.max_rel_error);
  }

  TEST_CASE("gradient descent on free embeddings drives p towards q") {
    Rng rng(11);
    ParameterStore store;
    Var img = store.add("img", random_tensor(Shape{4, 6}, rng));
    Var txt = store.add("txt", random_tensor(Shape{4, 6}, rng));
    const MatchLabels y = labels_for({0, 1, 2, 3});
    double previous = cmpm_bidirectional(img, txt, y, kEps).value().item();
    const double first = previous;
    for (int step = 0; step < 100; ++step) {
      store.zero_grad();
      const Var loss = cmpm_bidirectional(img, txt, y, kEps);
      backward(loss);
      for (auto* p : store.trainable()) {
        const auto g = p->var.grad();
        auto& v = p->var.mutable_value();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 0.1 * g[i];
      }
      const double now = cmpm_bidirectional(img, txt, y, kEps).value().item();
      CHECK(now < previous);
      previous = now;
    }
    CHECK(previous < 0.1 * first);
    const Tensor p = match_probabilities(img, txt).value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(i, i) > 0.9);
  }
}

TEST_SUITE("multi-stage") {
  TEST_CASE("low weight alone equals the low-level term") {
    Rng rng(12);
    const auto a = random_set(rng, 4, 3, 5, 7);
    const auto b = random_set(rng, 4, 3, 5, 7);
    const MatchLabels y = labels_for({0, 1, 1, 2});
    const auto loss = multi_stage_loss(a, b, y, LossWeights{1, 0, 0, kEps});
    CHECK(loss.total.value().item() == cmpm_bidirectional(a.low, b.low, y, kEps).value().item());
    REQUIRE(loss.terms.size() == 1);
    CHECK(loss.terms[0].first == "low");
  }

  TEST_CASE("K=1 with equal levels triples a single term") {
    Rng rng(13);
    auto make = [&] {
      FeatureSet fs;
      fs.low = Var(random_tensor(Shape{3, 4}, rng));
      fs.parts = {fs.low};
      fs.global = fs.low;
      return fs;
    };
    const auto a = make();
    const auto b = make();
    const MatchLabels y = labels_for({0, 1, 2});
    const double single = cmpm_bidirectional(a.low, b.low, y, kEps).value().item();
    CHECK(multi_stage_loss(a, b, y, LossWeights{}).total.value().item() == doctest::Approx(3.0 * single).epsilon(1e-14));
  }

  TEST_CASE("weighted sum of every stage with named terms") {
    Rng rng(14);
    const auto a = random_set(rng, 5, 2, 3, 4);
    const auto b = random_set(rng, 5, 2, 3, 4);
    const MatchLabels y = labels_for({0, 1, 2, 0, 1});
    const LossWeights w{0.5, 2.0, 3.0, kEps};
    const auto loss = multi_stage_loss(a, b, y, w);
    const double want = 0.5 * cmpm_bidirectional(a.low, b.low, y, kEps).value().item() +
                        2.0 * (cmpm_bidirectional(a.parts[0], b.parts[0], y, kEps).value().item() +
                               cmpm_bidirectional(a.parts[1], b.parts[1], y, kEps).value().item()) +
                        3.0 * cmpm_bidirectional(a.global, b.global, y, kEps).value().item();
    CHECK(loss.total.value().item() == doctest::Approx(want).epsilon(1e-13));
    REQUIRE(loss.terms.size() == 4);
    CHECK(loss.terms[0].first == "low");
    CHECK(loss.terms[1].first == "local[0]");
    CHECK(loss.terms[2].first == "local[1]");
    CHECK(loss.terms[3].first == "global");
  }

  TEST_CASE("variant masks select stages") {
    Rng rng(15);
    const auto a = random_set(rng, 4, 2, 3, 4);
    const auto b = random_set(rng, 4, 2, 3, 4);
    const MatchLabels y = labels_for({0, 1, 2, 3});
    CHECK(multi_stage_loss(a, b, y, LossWeights::variant('a')).terms.size() == 2);
    CHECK(multi_stage_loss(a, b, y, LossWeights::variant('b')).terms.size() == 1);
    CHECK(multi_stage_loss(a, b, y, LossWeights::variant('f')).terms.size() == 4);
  }

  TEST_CASE("mismatched part counts are a shape error") {
    Rng rng(16);
    const auto a = random_set(rng, 4, 2, 3, 4);
    const auto b = random_set(rng, 4, 3, 3, 4);
    CHECK_THROWS_AS(multi_stage_loss(a, b, labels_for({0, 1, 2, 3}), LossWeights{}), ShapeError);
  }
}

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bood/boundary.hpp"
#include "bood/error.hpp"
#include "test_support.hpp"

using namespace bood;

namespace {

CosineClassifier planar_classifier() {
  AnchorSet a;
  a.class_names = {"e1", "e2"};
  a.vectors = Matrix::Identity(2, 2);
  return CosineClassifier(a, 1.0);
}

// Constant logits and an identically zero gradient.
class FrozenHead final : public FeatureClassifier {
 public:
  std::size_t class_count() const override { return 2; }
  Vector logits(const Vector&) const override { return testing::vec({1.0, 0.0}); }
  double loss_and_grad(const Vector& z, std::size_t, Vector& grad) const override {
    grad = Vector::Zero(z.size());
    return 0.3;
  }
};

// Closed-form gradient of CE over 2-D cosine logits against anchor e1, t = 1.
std::pair<double, double> planar_grad_class0(double a, double b) {
  const double r = std::hypot(a, b);
  const double c1 = a / r, c2 = b / r;
  const double m = std::max(c1, c2);
  const double e1 = std::exp(c1 - m), e2 = std::exp(c2 - m);
  const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
  const double r3 = r * r * r;
  const double dc1_da = b * b / r3, dc1_db = -a * b / r3;
  const double dc2_da = -a * b / r3, dc2_db = a * a / r3;
  return {(p1 - 1.0) * dc1_da + p2 * dc2_da, (p1 - 1.0) * dc1_db + p2 * dc2_db};
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Step-by-step reference of the flip count for class e1.
int reference_flip_steps(double a, double b, double alpha, int max_steps) {
  if (b >= a) return 0;
  for (int k = 1; k <= max_steps; ++k) {
    const auto [ga, gb] = planar_grad_class0(a, b);
    a += alpha * sgn(ga);
    b += alpha * sgn(gb);
    if (b > a) return k;
  }
  return -1;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return rank;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i], my += ry[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

DistanceTable table_of(const std::vector<long>& steps) {
  DistanceTable t;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    DistanceRecord r;
    r.source_index = i;
    if (steps[i] >= 0) r.steps = static_cast<std::size_t>(steps[i]);
    t.push_back(r);
  }
  return t;
}

std::vector<std::size_t> indices(const std::vector<DistanceRecord>& v) {
  std::vector<std::size_t> out;
  for (const auto& r : v) out.push_back(r.source_index);
  return out;
}

std::vector<LatentFeature> toy_features(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LatentFeature> f;
  for (std::size_t i = 0; i < n; ++i) {
    const double th = rng.uniform(-0.6, 2.2);
    const double r = rng.uniform(0.5, 2.0);
    f.push_back({testing::vec({r * std::cos(th), r * std::sin(th)}), rng.index(2), i});
  }
  return f;
}

}  // namespace

TEST_CASE("perturb_step: z=(1,0) against anchor e1 moves only along the second axis") {
  const auto clf = planar_classifier();
  Vector grad;
  clf.loss_and_grad(testing::vec({1, 0}), 0, grad);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] > 0.0);
  const auto [ga, gb] = planar_grad_class0(1.0, 0.0);
  CHECK(ga == 0.0);
  CHECK(gb == doctest::Approx(grad[1]).epsilon(1e-12));
  const Vector z1 = perturb_step(clf, testing::vec({1, 0}), 0, 0.015);
  CHECK(z1[0] == 1.0);
  CHECK(z1[1] == 0.015);
}

TEST_CASE("perturb_step: zero step size and zero gradient leave z unchanged") {
  const auto clf = planar_classifier();
  const Vector z = testing::vec({0.7, 0.2});
  CHECK(perturb_step(clf, z, 0, 0.0) == z);
  CHECK(perturb_step(FrozenHead{}, z, 0, 0.015) == z);
}

TEST_CASE("perturb_step: degenerate feature and bad label") {
  const auto clf = planar_classifier();
  CHECK_THROWS(perturb_step(clf, testing::vec({0, 0}), 0, 0.015));
  CHECK_THROWS(estimate_distance(clf, testing::vec({1, 0}), 2, BoundaryConfig{}));
}

TEST_CASE("estimate_distance: toy flip count matches the reference simulation") {
  const auto clf = planar_classifier();
  const auto est = estimate_distance(clf, testing::vec({1, 0}), 0, BoundaryConfig{});
  const int ref = reference_flip_steps(1.0, 0.0, 0.015, 100);
  REQUIRE(est.crossed());
  CHECK(*est.steps >= 30);
  CHECK(*est.steps <= 40);
  CHECK(static_cast<int>(*est.steps) == ref);
  CHECK(*est.steps == 34);
  CHECK(clf.predict(est.final_z) == 1);
}

TEST_CASE("estimate_distance: misclassified inputs give k=0 and unchanged z") {
  const auto clf = planar_classifier();
  const Vector z = testing::vec({0.2, 0.9});
  const auto est = estimate_distance(clf, z, 0, BoundaryConfig{});
  REQUIRE(est.crossed());
  CHECK(*est.steps == 0);
  CHECK(est.final_z == z);
}

TEST_CASE("estimate_distance: no movement never crosses") {
  BoundaryConfig cfg;
  cfg.max_steps = 7;
  const Vector z = testing::vec({0.3, 0.1});
  const auto est = estimate_distance(FrozenHead{}, z, 0, cfg);
  CHECK_FALSE(est.crossed());
  CHECK(est.final_z == z);
}

TEST_CASE("estimate_distance: agrees with the reference over random planar features") {
  const auto clf = planar_classifier();
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const double th = rng.uniform(-0.8, 0.7), r = rng.uniform(0.3, 3.0);
    const double a = r * std::cos(th), b = r * std::sin(th);
    const auto est = estimate_distance(clf, testing::vec({a, b}), 0, BoundaryConfig{});
    const int ref = reference_flip_steps(a, b, 0.015, 100);
    CHECK((est.crossed() ? static_cast<int>(*est.steps) : -1) == ref);
  }
}

TEST_CASE("estimate_distance: k decreases with the angular margin") {
  const auto clf = planar_classifier();
  Rng rng(5);
  std::vector<double> margin, steps;
  for (int i = 0; i < 50; ++i) {
    const double th = rng.uniform(0.0, std::numbers::pi / 4.0);
    const auto est = estimate_distance(clf, testing::vec({std::cos(th), std::sin(th)}), 0, BoundaryConfig{});
    REQUIRE(est.crossed());
    margin.push_back(std::numbers::pi / 4.0 - th);
    steps.push_back(static_cast<double>(*est.steps));
  }
  CHECK(spearman(margin, steps) >= 0.9);
}

TEST_CASE("estimate_distance: k=0 exactly for misclassified features, deterministic otherwise") {
  const auto clf = planar_classifier();
  const auto feats = toy_features(300, 8);
  const auto a = estimate_distances(clf, feats, BoundaryConfig{});
  const auto b = estimate_distances(clf, feats, BoundaryConfig{});
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const bool wrong = clf.predict(feats[i].z) != feats[i].label;
    if (a[i].crossed()) CHECK((*a[i].steps == 0) == wrong);
    CHECK(a[i].steps == b[i].steps);
    CHECK(a[i].final_z == b[i].final_z);
    CHECK(a[i].source_index == i);
  }
}

TEST_CASE("estimate_distances: table is independent of the thread count") {
  const auto clf = planar_classifier();
  const auto feats = toy_features(257, 3);
  const auto one = estimate_distances(clf, feats, BoundaryConfig{}, 1);
  const auto four = estimate_distances(clf, feats, BoundaryConfig{}, 4);
  REQUIRE(one.size() == four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].source_index == four[i].source_index);
    CHECK(one[i].steps == four[i].steps);
    CHECK(one[i].final_z == four[i].final_z);
  }
}

TEST_CASE("signed-gradient steps ascend the loss on the planar problem") {
  const auto clf = planar_classifier();
  std::size_t steps = 0, violations = 0;
  Rng rng(17);
  for (double alpha : {0.005, 0.01, 0.015}) {
    for (int i = 0; i < 50; ++i) {
      const double th = rng.uniform(0.0, std::numbers::pi / 4.0);
      Vector z = testing::vec({std::cos(th), std::sin(th)}), g;
      for (std::size_t k = 0; k < 100 && clf.predict(z) == 0; ++k) {
        const double before = clf.loss_and_grad(z, 0, g);
        const Vector next = perturb_step(clf, z, 0, alpha);
        const double after = clf.loss_and_grad(next, 0, g);
        ++steps;
        if (!(after > before) && next != z) ++violations;
        z = next;
      }
    }
  }
  CHECK(static_cast<double>(violations) <= 0.02 * static_cast<double>(steps));
}

TEST_CASE("select_boundary: smallest r percent with index tie-break") {
  CHECK(indices(select_boundary(table_of({5, 1, 3, 2, 4}), 40.0)) == std::vector<std::size_t>{1, 3});
  CHECK(indices(select_boundary(table_of({5, 1, 3, 2, 4}), 100.0)) ==
        std::vector<std::size_t>{1, 3, 2, 4, 0});
  CHECK(indices(select_boundary(table_of({2, 2, 2}), 34.0)) == std::vector<std::size_t>{0, 1});
  CHECK(indices(select_boundary(table_of({-1, 3, -1, 0}), 100.0)) == std::vector<std::size_t>{3, 1});
  CHECK(indices(select_boundary(table_of({9, 8, 7}), 1.0)) == std::vector<std::size_t>{2});
}

TEST_CASE("select_boundary: errors") {
  try {
    select_boundary(table_of({-1, -1}), 5.0);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("no boundary features") != std::string::npos);
  }
  CHECK_THROWS(select_boundary({}, 5.0));
  CHECK_THROWS_AS(select_boundary(table_of({1}), 0.0), ConfigError);
  CHECK_THROWS_AS(select_boundary(table_of({1}), 101.0), ConfigError);
}

TEST_CASE("select_boundary: selection size is ceil(r% of crossed)") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<long> steps;
    const auto n = 1 + rng.index(60);
    std::size_t crossed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long s = static_cast<long>(rng.index(12)) - 1;
      steps.push_back(s);
      crossed += s >= 0;
    }
    if (crossed == 0) continue;
    const double r = rng.uniform(0.5, 100.0);
    const auto sel = select_boundary(table_of(steps), r);
    const auto expect = static_cast<std::size_t>(std::ceil(r * static_cast<double>(crossed) / 100.0 - 1e-9));
    CHECK(sel.size() == std::max<std::size_t>(1, expect));
    for (std::size_t i = 1; i < sel.size(); ++i) {
      CHECK(std::pair(*sel[i - 1].steps, sel[i - 1].source_index) < std::pair(*sel[i].steps, sel[i].source_index));
    }
    long worst_selected = static_cast<long>(*sel.back().steps);
    for (std::size_t i = 0; i < n; ++i) {
      const bool chosen = std::any_of(sel.begin(), sel.end(), [&](auto& s) { return s.source_index == i; });
      if (!chosen && steps[i] >= 0) CHECK(steps[i] >= worst_selected);
    }
  }
}

TEST_CASE("BoundaryConfig validation") {
  BoundaryConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.select_percent = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("distance summary and CSV round trip") {
  const auto t = table_of({3, -1, 0, 3, 5});
  const auto s = summarize(t);
  CHECK(s.total == 5);
  CHECK(s.never_crossed == 1);
  CHECK(s.already_misclassified == 1);
  CHECK(s.mean_steps == doctest::Approx(11.0 / 4.0));
  CHECK(s.histogram.at(3) == 2);

  const auto dir = testing::scratch_dir("distance_csv");
  write_distance_csv(t, dir / "d.csv");
  const auto back = load_distance_csv(dir / "d.csv");
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].source_index == t[i].source_index);
    CHECK(back[i].steps == t[i].steps);
  }
  {
    std::ofstream os(dir / "bad.csv");
    os << "nope\n";
  }
  CHECK_THROWS_AS(load_distance_csv(dir / "bad.csv"), IoError);
}

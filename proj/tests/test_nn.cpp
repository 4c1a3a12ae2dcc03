#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>

#include "bood/error.hpp"
#include "bood/nn.hpp"
#include "test_support.hpp"

using namespace bood;
using testing::rows;

namespace {

Mlp random_mlp(std::vector<std::size_t> widths, Activation act, std::uint64_t seed) {
  Mlp m{{std::move(widths), act}, {}};
  Rng rng(seed);
  m.params = init_params(m.spec, rng);
  // Nonzero biases exercise the bias gradient path.
  for (auto& l : m.params.layers) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.3, 0.3);
  }
  return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("mlp_forward: identity layer passes input through") {
  Mlp m{{{2, 2}, Activation::relu}, {{{Matrix::Identity(2, 2), Vector::Zero(2)}}}};
  const Matrix out = mlp_forward(m, rows({{1, 2}}));
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
}

TEST_CASE("mlp_forward: clamped relu layer leaves the final bias") {
  Mlp m{{{2, 3, 2}, Activation::relu}, {}};
  m.params.layers.push_back({-Matrix::Ones(3, 2), Vector::Constant(3, -1.0)});
  m.params.layers.push_back({Matrix::Ones(2, 3), testing::vec({0.25, -0.5})});
  const Matrix out = mlp_forward(m, rows({{1, 2}, {0.5, 0.1}}));
  for (Eigen::Index r = 0; r < 2; ++r) {
    CHECK(out(r, 0) == 0.25);
    CHECK(out(r, 1) == -0.5);
  }
}

TEST_CASE("mlp_forward: seeded 2-layer net matches scalar re-evaluation and golden values") {
  Mlp m{{{2, 4, 3}, Activation::relu}, {}};
  Rng rng(11);
  m.params = init_params(m.spec, rng);
  const Matrix out = mlp_forward(m, rows({{1, 0}}));
  const auto ref = testing::scalar_forward(m, {1.0, 0.0});
  REQUIRE(out.cols() == 3);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(ref[static_cast<std::size_t>(j)]).epsilon(1e-15));
  // Pinned from the first reference evaluation.
  const double golden[3] = {0.64264425670644743, 1.2453548129093053, -0.15461420410491811};
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(golden[j]).epsilon(1e-12));
}

TEST_CASE("mlp_forward: tanh net matches scalar re-evaluation") {
  const auto m = random_mlp({3, 5, 4, 2}, Activation::tanh, 5);
  Rng rng(9);
  const Matrix x = random_matrix(6, 3, rng);
  const Matrix out = mlp_forward(m, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto ref = testing::scalar_forward(m, {x(i, 0), x(i, 1), x(i, 2)});
    for (Eigen::Index j = 0; j < 2; ++j) CHECK(out(i, j) == doctest::Approx(ref[static_cast<std::size_t>(j)]).epsilon(1e-14));
  }
}

TEST_CASE("mlp_forward: wrong input width is a dimension error") {
  const auto m = random_mlp({3, 4, 2}, Activation::relu, 1);
  CHECK_THROWS_AS(mlp_forward(m, Matrix::Zero(2, 4)), DimensionError);
}

TEST_CASE("mlp_forward is pure") {
  const auto m = random_mlp({4, 8, 3}, Activation::relu, 2);
  Rng rng(1);
  const Matrix x = random_matrix(10, 4, rng);
  const Matrix a = mlp_forward(m, x);
  const Matrix b = mlp_forward(m, x);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("MlpSpec validation") {
  CHECK_THROWS_AS(MlpSpec({{3}, Activation::relu}).validate(), ConfigError);
  CHECK_THROWS_AS(MlpSpec({{3, 0, 2}, Activation::relu}).validate(), ConfigError);
  CHECK_NOTHROW(MlpSpec({{3, 2}, Activation::tanh}).validate());
  CHECK(parse_activation("tanh") == Activation::tanh);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("init_params: shapes, bound and zero biases") {
  const MlpSpec spec{{5, 7, 3}, Activation::relu};
  Rng rng(3);
  const auto p = init_params(spec, rng);
  CHECK_NOTHROW(check_shapes(spec, p));
  CHECK(p.parameter_count() == 5 * 7 + 7 + 7 * 3 + 3);
  const double b0 = std::sqrt(6.0 / 12.0);
  CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= b0);
  CHECK(p.layers[0].bias.isZero());
  CHECK(p.layers[1].bias.isZero());
}

TEST_CASE("loss_and_grads: uniform logits over two classes give ln 2") {
  Mlp m{{{2, 2}, Activation::relu}, {{{Matrix::Zero(2, 2), Vector::Zero(2)}}}};
  const std::vector<std::size_t> y = {0, 1, 1};
  const auto r = loss_and_grads(m, rows({{1, 2}, {3, -1}, {0.5, 0.5}}), y);
  CHECK(r.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("loss_and_grads: constant head yields exactly zero gradients") {
  const auto m = random_mlp({3, 4, 2}, Activation::relu, 4);
  const LossHead frozen = [](const Matrix& out) { return HeadResult{1.5, Matrix::Zero(out.rows(), out.cols())}; };
  Rng rng(2);
  const auto r = loss_and_grads(m, random_matrix(5, 3, rng), frozen);
  CHECK(r.loss == 1.5);
  for (const auto& l : r.grads.layers) {
    CHECK(l.weight.isZero(0.0));
    CHECK(l.bias.isZero(0.0));
  }
  CHECK(r.input_grad.isZero(0.0));
}

TEST_CASE("loss_and_grads: loss is the batch mean of per-row cross-entropy") {
  const auto m = random_mlp({3, 6, 4}, Activation::tanh, 8);
  Rng rng(8);
  const Matrix x = random_matrix(7, 3, rng);
  std::vector<std::size_t> y;
  for (int i = 0; i < 7; ++i) y.push_back(static_cast<std::size_t>(i % 4));
  double ref = 0.0;
  for (Eigen::Index i = 0; i < 7; ++i) {
    ref += testing::reference_ce(testing::scalar_forward(m, {x(i, 0), x(i, 1), x(i, 2)}), y[static_cast<std::size_t>(i)]);
  }
  CHECK(loss_and_grads(m, x, y).loss == doctest::Approx(ref / 7.0).epsilon(1e-13));
}

TEST_CASE("loss_and_grads: label and batch errors") {
  const auto m = random_mlp({2, 3, 2}, Activation::relu, 1);
  const std::vector<std::size_t> bad = {2};
  CHECK_THROWS_AS(loss_and_grads(m, rows({{1, 1}}), bad), std::out_of_range);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(loss_and_grads(m, Matrix(0, 2), none), std::invalid_argument);
  const std::vector<std::size_t> two = {0, 1};
  CHECK_THROWS_AS(loss_and_grads(m, rows({{1, 1}}), two), DimensionError);
}

TEST_CASE("gradients match central differences on random 3-layer nets, batch of 4") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto act = seed % 2 ? Activation::tanh : Activation::relu;
    const auto m = random_mlp({3, 5, 4, 3}, act, 100 + seed);
    Rng rng(200 + seed);
    const Matrix x = random_matrix(4, 3, rng);
    const std::vector<std::size_t> y = {0, 1, 2, static_cast<std::size_t>(seed % 3)};
    const LossHead head = [&](const Matrix& out) { return softmax_cross_entropy(out, y); };
    const auto report = finite_diff_check(m, x, head);
    CAPTURE(seed);
    CHECK(report.ok());
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked == m.params.parameter_count() + 12);
  }
}

TEST_CASE("finite_diff_check: constant loss reports zero error") {
  const auto m = random_mlp({2, 3, 2}, Activation::relu, 6);
  const LossHead frozen = [](const Matrix& out) { return HeadResult{0.25, Matrix::Zero(out.rows(), out.cols())}; };
  const auto report = finite_diff_check(m, rows({{0.3, -0.2}}), frozen);
  CHECK(report.max_rel_error == 0.0);
  CHECK(report.ok());
}

TEST_CASE("finite_diff_check: a corrupted entry is flagged") {
  const auto m = random_mlp({3, 4, 2}, Activation::tanh, 7);
  const std::vector<std::size_t> y = {1, 0};
  const Matrix x = rows({{0.1, 0.2, -0.3}, {1.0, -0.5, 0.2}});
  const LossHead head = [&](const Matrix& out) { return softmax_cross_entropy(out, y); };
  auto analytic = loss_and_grads(m, x, head);
  analytic.grads.layers[1].weight(1, 2) += 1.0;
  const auto report = compare_gradients(analytic, numeric_gradients(m, x, head), 1e-4);
  REQUIRE(report.flagged.size() == 1);
  const auto& e = report.flagged.front();
  CHECK_FALSE(e.is_input);
  CHECK_FALSE(e.is_bias);
  CHECK(e.layer == 1);
  CHECK(e.row == 1);
  CHECK(e.col == 2);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.1, 0.0) == doctest::Approx(0.1));
  CHECK(cosine_lr(100, 100, 0.1, 0.0) == doctest::Approx(0.0));
  CHECK(cosine_lr(50, 100, 0.1, 0.0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 0.1, 0.01) == doctest::Approx(0.01));
}

TEST_CASE("cosine_lr is nonincreasing and bounded") {
  for (std::size_t total : {1u, 7u, 250u}) {
    double prev = cosine_lr(0, total, 0.3, 0.02);
    for (std::size_t s = 1; s <= total; ++s) {
      const double v = cosine_lr(s, total, 0.3, 0.02);
      CHECK(v <= prev);
      CHECK(v >= 0.02);
      CHECK(v <= 0.3);
      prev = v;
    }
  }
}

TEST_CASE("sgd_step arithmetic") {
  MlpParams p{{{Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 1.0)}}};
  MlpParams g{{{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 2.0)}}};
  const auto q = sgd_step(p, g, 0.1);
  CHECK(q.layers[0].weight(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(q.layers[0].bias[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(sgd_step(p, g, 0.0) == p);
  MlpParams bad{{{Matrix::Zero(2, 1), Vector::Zero(2)}}};
  CHECK_THROWS_AS(sgd_step(p, bad, 0.1), DimensionError);
}

TEST_CASE("sgd_step: two steps with fixed grads equal one summed step") {
  const auto m = random_mlp({3, 4, 2}, Activation::relu, 12);
  const auto g = random_mlp({3, 4, 2}, Activation::relu, 13).params;
  const auto two = sgd_step(sgd_step(m.params, g, 0.05), g, 0.05);
  const auto one = sgd_step(m.params, g, 0.1);
  for (std::size_t l = 0; l < two.layers.size(); ++l) {
    CHECK((two.layers[l].weight - one.layers[l].weight).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((two.layers[l].bias - one.layers[l].bias).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.batch_size = 8;
  c.lr_min = 0.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("epoch_batches keeps the last partial batch and covers every index") {
  Rng rng(1);
  const auto batches = epoch_batches(10, 4, true, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[2].size() == 2);
  std::vector<int> seen(10, 0);
  for (const auto& b : batches) {
    for (auto i : b) seen[i] += 1;
  }
  for (int s : seen) CHECK(s == 1);
  Rng r2(1);
  const auto ordered = epoch_batches(5, 2, false, r2);
  CHECK(ordered[0] == std::vector<std::size_t>{0, 1});
  CHECK(ordered[2] == std::vector<std::size_t>{4});
}

TEST_CASE("checkpoint round trip is bit-exact and the header follows the format") {
  const auto dir = testing::scratch_dir("ckpt");
  const auto m = random_mlp({3, 5, 2}, Activation::tanh, 21);
  const auto path = dir / "net.ckpt";
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path, Activation::tanh);
  CHECK(back.spec.widths == m.spec.widths);
  CHECK(back.params == m.params);

  std::ifstream is(path, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  CHECK(std::string(magic, 8) == "BOODCKPT");
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  CHECK(buf[0] == 1);
  is.read(reinterpret_cast<char*>(buf), 4);
  CHECK(buf[0] == 2);
  const auto expected_size = 8 + 4 + 4 + 3 * 4 + 8 * m.params.parameter_count();
  CHECK(std::filesystem::file_size(path) == expected_size);
}

TEST_CASE("checkpoint load rejects bad files") {
  const auto dir = testing::scratch_dir("ckpt_bad");
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt", Activation::relu), IoError);
  {
    std::ofstream os(dir / "bad.ckpt", std::ios::binary);
    os << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt", Activation::relu), IoError);
  const auto m = random_mlp({2, 3, 2}, Activation::relu, 1);
  save_checkpoint(m, dir / "trunc.ckpt");
  std::filesystem::resize_file(dir / "trunc.ckpt", std::filesystem::file_size(dir / "trunc.ckpt") - 8);
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt", Activation::relu), IoError);
}

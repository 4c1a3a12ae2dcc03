#include "doctest.h"

#include <cmath>
#include <fstream>

#include "bood/data.hpp"
#include "bood/error.hpp"
#include "test_support.hpp"

using namespace bood;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.classes = 4;
  s.input_dim = 6;
  s.train_per_class = 50;
  s.test_per_class = 20;
  s.seed = 3;
  return s;
}

// Pseudo-inverse through the normal equations, independent of the SVD path.
Matrix normal_equation_pinv(const Matrix& w) {
  const Matrix wtw = w.transpose() * w;
  return wtw.ldlt().solve(w.transpose());
}

}  // namespace

TEST_CASE("gaussian mixture: zero noise puts every sample on its class center") {
  auto spec = small_spec();
  spec.noise_sigma = 0.0;
  const auto g = gen_gaussian_mixture(spec);
  for (std::size_t i = 0; i < g.train.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(g.train.labels[i]);
    CHECK(g.train.rows.row(static_cast<Eigen::Index>(i)) == g.record.centers.row(k));
  }
}

TEST_CASE("generators are pure functions of the spec") {
  for (auto kind : {DatasetKind::gaussian_mixture, DatasetKind::two_rings}) {
    auto spec = small_spec();
    spec.kind = kind;
    const auto a = generate_dataset(spec);
    const auto b = generate_dataset(spec);
    CHECK((a.train.rows.array() == b.train.rows.array()).all());
    CHECK(a.train.labels == b.train.labels);
    CHECK((a.id_test.rows.array() == b.id_test.rows.array()).all());
    spec.seed += 1;
    const auto c = generate_dataset(spec);
    CHECK_FALSE((a.train.rows.array() == c.train.rows.array()).all());
  }
}

TEST_CASE("gaussian mixture: per-class sample mean within 3 sigma / sqrt(m) of the center") {
  DatasetSpec spec;
  spec.classes = 8;
  spec.input_dim = 2;
  spec.latent_dim = 2;
  spec.train_per_class = 500;
  spec.noise_sigma = 0.2;
  spec.seed = 7;
  const auto g = gen_gaussian_mixture(spec);
  const double bound = 3.0 * 0.2 / std::sqrt(500.0);
  for (std::size_t k = 0; k < 8; ++k) {
    Vector mean = Vector::Zero(2);
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.train.size(); ++i) {
      if (g.train.labels[i] != k) continue;
      mean += g.train.rows.row(static_cast<Eigen::Index>(i)).transpose();
      ++n;
    }
    REQUIRE(n == 500);
    mean /= 500.0;
    for (Eigen::Index c = 0; c < 2; ++c) {
      CHECK(std::abs(mean[c] - g.record.centers(static_cast<Eigen::Index>(k), c)) < bound);
    }
  }
}

TEST_CASE("gaussian mixture: circle centers at the configured radius, orthonormal mixing") {
  const auto g = gen_gaussian_mixture(DatasetSpec{});
  REQUIRE(g.record.mixing.rows() == 16);
  REQUIRE(g.record.mixing.cols() == 2);
  const Matrix wtw = g.record.mixing.transpose() * g.record.mixing;
  CHECK((wtw - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index k = 0; k < 8; ++k) {
    CHECK(g.record.latent_centers.row(k).norm() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(g.record.centers.row(k).norm() == doctest::Approx(3.0).epsilon(1e-12));
  }
  CHECK(g.train.size() == 4000);
  CHECK(g.id_test.size() == 1600);
}

TEST_CASE("DatasetSpec validation") {
  DatasetSpec s;
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = DatasetSpec{};
  s.train_per_class = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = DatasetSpec{};
  s.kind = DatasetKind::from_csv;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(parse_dataset_kind("two_rings") == DatasetKind::two_rings);
  CHECK_THROWS_AS(parse_dataset_kind("mnist"), ConfigError);
}

TEST_CASE("held_out_classes: centers respect the declared margin and samples avoid ID balls") {
  const DatasetSpec spec;
  auto g = gen_gaussian_mixture(spec);
  const auto ood = gen_ood_testset(spec, g, {ShiftKind::held_out_classes, 800, 2.0, 1.5, 11}, g.record);
  CHECK(ood.size() == 800);
  CHECK(ood.split == Split::ood_test);
  REQUIRE(g.record.ood_centers.count("held_out_classes") == 1);
  const Matrix& oc = g.record.ood_centers.at("held_out_classes");
  const double declared = g.record.margins.at("held_out_declared");
  CHECK(declared == doctest::Approx(kHeldOutMarginSigmas * spec.noise_sigma));
  for (Eigen::Index i = 0; i < oc.rows(); ++i) {
    for (Eigen::Index k = 0; k < g.record.centers.rows(); ++k) {
      CHECK((oc.row(i) - g.record.centers.row(k)).norm() >= declared);
    }
  }
  const double ball = 3.0 * spec.noise_sigma;
  for (Eigen::Index r = 0; r < ood.rows.rows(); ++r) {
    for (Eigen::Index k = 0; k < g.record.centers.rows(); ++k) {
      CHECK((ood.rows.row(r) - g.record.centers.row(k)).norm() > ball);
    }
  }
}

TEST_CASE("held_out_classes needs a gaussian mixture") {
  auto spec = small_spec();
  spec.kind = DatasetKind::two_rings;
  auto g = generate_dataset(spec);
  CHECK_THROWS_AS(gen_ood_testset(spec, g, {ShiftKind::held_out_classes, 10, 2.0, 1.5, 1}, g.record), ConfigError);
}

TEST_CASE("radial_shift: factor below 2 is rejected; samples lie outside the ID radius") {
  const DatasetSpec spec;
  auto g = gen_gaussian_mixture(spec);
  CHECK_THROWS_AS(gen_ood_testset(spec, g, {ShiftKind::radial_shift, 10, 1.0, 1.5, 1}, g.record), ConfigError);
  const auto ood = gen_ood_testset(spec, g, {ShiftKind::radial_shift, 500, 2.0, 1.5, 1}, g.record);
  const Vector origin = g.train.rows.colwise().mean().transpose();
  double id_max = 0.0;
  for (Eigen::Index k = 0; k < g.record.centers.rows(); ++k) {
    id_max = std::max(id_max, (g.record.centers.row(k).transpose() - origin).norm());
  }
  double ood_mean = 0.0;
  for (Eigen::Index r = 0; r < ood.rows.rows(); ++r) ood_mean += (ood.rows.row(r).transpose() - origin).norm();
  ood_mean /= static_cast<double>(ood.rows.rows());
  CHECK(ood_mean > 1.8 * id_max);
}

TEST_CASE("uniform_box: samples lie outside the ID box and inside the inflated box") {
  const DatasetSpec spec;
  auto g = gen_gaussian_mixture(spec);
  const auto ood = gen_ood_testset(spec, g, {ShiftKind::uniform_box, 500, 2.0, 1.5, 5}, g.record);
  const Vector lo = g.train.rows.colwise().minCoeff().transpose();
  const Vector hi = g.train.rows.colwise().maxCoeff().transpose();
  const Vector mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  for (Eigen::Index r = 0; r < ood.rows.rows(); ++r) {
    const Vector x = ood.rows.row(r).transpose();
    CHECK_FALSE(((x.array() >= lo.array()) && (x.array() <= hi.array())).all());
    CHECK(((x - mid).cwiseAbs().array() <= 1.5 * half.array() + 1e-12).all());
  }
}

TEST_CASE("uniform_box: degenerate box is an error") {
  GeneratedData g;
  g.train.rows = testing::rows({{0, 1}, {1, 1}, {2, 1}});
  g.train.labels = {0, 1, 0};
  g.train.class_count = 2;
  CHECK_THROWS_AS(gen_ood_testset(DatasetSpec{}, g, {ShiftKind::uniform_box, 5, 2.0, 1.5, 1}, g.record), ConfigError);
  g.train.rows(0, 1) = 0.5;
  CHECK_THROWS_AS(gen_ood_testset(DatasetSpec{}, g, {ShiftKind::uniform_box, 5, 2.0, 1.0, 1}, g.record), ConfigError);
  CHECK_NOTHROW(gen_ood_testset(DatasetSpec{}, g, {ShiftKind::uniform_box, 5, 2.0, 1.5, 1}, g.record));
}

TEST_CASE("generator record JSON round trip") {
  const DatasetSpec spec;
  auto g = gen_gaussian_mixture(spec);
  gen_ood_testset(spec, g, {ShiftKind::held_out_classes, 10, 2.0, 1.5, 2}, g.record);
  const auto j = g.record.to_json();
  for (const char* key : {"seed", "centers", "W", "noise_sigma", "margins"}) CHECK(j.contains(key));
  const auto back = GeneratorRecord::from_json(j);
  CHECK(back.seed == g.record.seed);
  CHECK(back.centers == g.record.centers);
  CHECK(back.mixing == g.record.mixing);
  CHECK(back.margins == g.record.margins);
  CHECK(back.ood_centers.at("held_out_classes") == g.record.ood_centers.at("held_out_classes"));
}

TEST_CASE("toy_decode: identity, linearity, dimension check") {
  ToyDecoder dec{Matrix::Identity(3, 3), Vector::Zero(3)};
  const Vector z = testing::vec({0.5, -1.0, 2.0});
  CHECK(toy_decode(dec, z) == z);
  Rng rng(4);
  ToyDecoder r{Matrix(5, 3), Vector(5)};
  for (Eigen::Index i = 0; i < r.weight.size(); ++i) r.weight.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < 5; ++i) r.bias[i] = rng.normal();
  for (double a : {-2.0, 0.5, 3.0}) {
    const Vector lhs = toy_decode(r, Vector(a * z)) - r.bias;
    const Vector rhs = a * (toy_decode(r, z) - r.bias);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(toy_decode(r, testing::vec({1, 2})), DimensionError);
}

TEST_CASE("toy_decode: pseudo-inverse round trip recovers z") {
  Rng rng(9);
  ToyDecoder dec{Matrix(16, 8), Vector(16)};
  for (Eigen::Index i = 0; i < dec.weight.size(); ++i) dec.weight.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < 16; ++i) dec.bias[i] = rng.normal();
  REQUIRE_NOTHROW(dec.validate());
  const Matrix pinv = normal_equation_pinv(dec.weight);
  for (int trial = 0; trial < 50; ++trial) {
    Vector z(8);
    for (Eigen::Index i = 0; i < 8; ++i) z[i] = rng.normal();
    const Vector back = pinv * (toy_decode(dec, z) - dec.bias);
    CHECK((back - z).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("toy decoder rank check and least-squares fit") {
  ToyDecoder bad{Matrix::Zero(4, 2), Vector::Zero(4)};
  bad.weight(0, 0) = 1.0;
  bad.weight(1, 0) = 1.0;
  CHECK_THROWS_AS(bad.validate(), DimensionError);

  Rng rng(2);
  Matrix w(6, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  const Vector b = testing::vec({1, -1, 0.5, 0, 2, 3});
  Matrix z(40, 3);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  const Matrix x = (z * w.transpose()).rowwise() + b.transpose();
  const auto fit = fit_toy_decoder(z, x);
  CHECK((fit.weight - w).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.bias - b).cwiseAbs().maxCoeff() < 1e-10);
  const auto j = fit.to_json();
  const auto back = ToyDecoder::from_json(j);
  CHECK(back.weight == fit.weight);
  CHECK(back.bias == fit.bias);
}

TEST_CASE("load_embeddings_csv: ragged rows name the line") {
  const auto dir = testing::scratch_dir("csv_ragged");
  {
    std::ofstream os(dir / "r.csv");
    os << "a,1,2,3\nb,1,2,3,4\n";
  }
  try {
    load_embeddings_csv(dir / "r.csv");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_embeddings_csv: first-appearance label order") {
  const auto dir = testing::scratch_dir("csv_labels");
  {
    std::ofstream os(dir / "l.csv");
    os << "cat,1,2\ndog,3,4\ncat,5,6\n";
  }
  const auto d = load_embeddings_csv(dir / "l.csv");
  CHECK(d.labels == std::vector<std::size_t>{0, 1, 0});
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.class_count == 2);
  CHECK(d.rows(2, 1) == 6.0);
  const auto e = load_embeddings_csv(dir / "l.csv", {"dog", "bird"});
  CHECK(e.labels == std::vector<std::size_t>{2, 0, 2});
}

TEST_CASE("load_embeddings_csv: non-numeric fields and empty files") {
  const auto dir = testing::scratch_dir("csv_bad");
  {
    std::ofstream os(dir / "n.csv");
    os << "a,1,2\nb,1,x\n";
  }
  CHECK_THROWS_AS(load_embeddings_csv(dir / "n.csv"), IoError);
  { std::ofstream os(dir / "e.csv"); }
  CHECK_THROWS_AS(load_embeddings_csv(dir / "e.csv"), IoError);
  CHECK_THROWS_AS(load_embeddings_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("dataset CSV round trip of a generated dataset") {
  const auto dir = testing::scratch_dir("csv_roundtrip");
  const auto g = gen_gaussian_mixture(small_spec());
  write_dataset_csv(g.train, dir / "t.csv");
  const auto back = load_embeddings_csv(dir / "t.csv", g.train.class_names);
  CHECK(back.labels == g.train.labels);
  CHECK((back.rows - g.train.rows).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("from_csv datasets hold out every fifth row when no test file is given") {
  const auto dir = testing::scratch_dir("csv_source");
  const auto g = gen_gaussian_mixture(small_spec());
  write_dataset_csv(g.train, dir / "all.csv");
  DatasetSpec spec;
  spec.kind = DatasetKind::from_csv;
  spec.csv_train = (dir / "all.csv").string();
  const auto d = generate_dataset(spec);
  CHECK(d.train.size() == 160);
  CHECK(d.id_test.size() == 40);
  CHECK(d.id_test.rows.row(0) == g.train.rows.row(4));
}

TEST_CASE("two rings: class k lies near radius scale * (k + 1)") {
  auto spec = small_spec();
  spec.kind = DatasetKind::two_rings;
  spec.classes = 2;
  spec.noise_sigma = 0.0;
  const auto g = gen_two_rings(spec);
  for (std::size_t i = 0; i < g.train.size(); ++i) {
    const double r = g.train.rows.row(static_cast<Eigen::Index>(i)).norm();
    CHECK(r == doctest::Approx(3.0 * static_cast<double>(g.train.labels[i] + 1)).epsilon(1e-12));
  }
}

#include "bood/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "bood/binary_io.hpp"
#include "bood/error.hpp"
#include "bood/json_util.hpp"

namespace bood {

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian_mixture") return DatasetKind::gaussian_mixture;
  if (s == "two_rings") return DatasetKind::two_rings;
  if (s == "from_csv") return DatasetKind::from_csv;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gaussian_mixture: return "gaussian_mixture";
    case DatasetKind::two_rings: return "two_rings";
    case DatasetKind::from_csv: return "from_csv";
  }
  return "?";
}

ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "held_out_classes") return ShiftKind::held_out_classes;
  if (s == "radial_shift") return ShiftKind::radial_shift;
  if (s == "uniform_box") return ShiftKind::uniform_box;
  throw ConfigError("unknown OOD shift kind '" + s + "'");
}

std::string to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::held_out_classes: return "held_out_classes";
    case ShiftKind::radial_shift: return "radial_shift";
    case ShiftKind::uniform_box: return "uniform_box";
  }
  return "?";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::id_test: return "id_test";
    case Split::ood_test: return "ood_test";
  }
  return "?";
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(rows.rows()) != labels.size()) {
    throw DimensionError("dataset has " + std::to_string(rows.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (auto y : labels) {
    if (y >= class_count) throw std::out_of_range("label " + std::to_string(y) + " >= class count");
  }
}

void DatasetSpec::validate() const {
  if (kind == DatasetKind::from_csv) {
    if (csv_train.empty()) throw ConfigError("from_csv dataset needs csv_train");
    return;
  }
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (train_per_class < 1 || test_per_class < 1) throw ConfigError("samples per class must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (latent_dim < 1 || input_dim < 1) throw ConfigError("dimensions must be >= 1");
  if (input_dim < latent_dim) throw ConfigError("input_dim must be >= latent_dim");
  if (!mix && input_dim != latent_dim) throw ConfigError("mix=false requires input_dim == latent_dim");
  if (kind == DatasetKind::two_rings && latent_dim != 2) throw ConfigError("two_rings needs latent_dim 2");
}

nlohmann::json GeneratorRecord::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["latent_centers"] = matrix_to_json(latent_centers);
  j["centers"] = matrix_to_json(centers);
  j["W"] = matrix_to_json(mixing);
  j["noise_sigma"] = noise_sigma;
  j["margins"] = margins;
  auto oc = nlohmann::json::object();
  for (const auto& [k, m] : ood_centers) oc[k] = matrix_to_json(m);
  j["ood_centers"] = oc;
  return j;
}

GeneratorRecord GeneratorRecord::from_json(const nlohmann::json& j) {
  GeneratorRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.latent_centers = matrix_from_json(j.at("latent_centers"));
  r.centers = matrix_from_json(j.at("centers"));
  r.mixing = matrix_from_json(j.at("W"));
  r.noise_sigma = j.at("noise_sigma").get<double>();
  r.margins = j.at("margins").get<std::map<std::string, double>>();
  for (const auto& [k, v] : j.at("ood_centers").items()) r.ood_centers[k] = matrix_from_json(v);
  return r;
}

namespace {

// D x L matrix with orthonormal columns (identity when D == L and no mixing).
Matrix make_mixing(const DatasetSpec& spec, Rng rng) {
  const auto d = static_cast<Eigen::Index>(spec.input_dim);
  const auto l = static_cast<Eigen::Index>(spec.latent_dim);
  if (!spec.mix) return Matrix::Identity(d, l);
  Matrix g(d, l);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, l);
  return q;
}

Matrix latent_centers_for(const DatasetSpec& spec, Rng rng) {
  const auto v = static_cast<Eigen::Index>(spec.classes);
  const auto l = static_cast<Eigen::Index>(spec.latent_dim);
  Matrix c(v, l);
  if (spec.classes <= 8 && spec.latent_dim == 2) {
    for (Eigen::Index k = 0; k < v; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(v);
      c(k, 0) = spec.center_scale * std::cos(angle);
      c(k, 1) = spec.center_scale * std::sin(angle);
    }
  } else {
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = spec.center_scale * rng.normal();
  }
  return c;
}

std::vector<std::string> default_class_names(std::size_t v) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < v; ++k) names.push_back("class_" + std::to_string(k));
  return names;
}

Dataset sample_around(const Matrix& centers, std::size_t per_class, double sigma, Split split,
                      Rng rng) {
  const auto v = static_cast<std::size_t>(centers.rows());
  Dataset d;
  d.class_count = v;
  d.class_names = default_class_names(v);
  d.split = split;
  d.rows.resize(static_cast<Eigen::Index>(v * per_class), centers.cols());
  d.labels.resize(v * per_class);
  std::size_t i = 0;
  for (std::size_t k = 0; k < v; ++k) {
    for (std::size_t s = 0; s < per_class; ++s, ++i) {
      for (Eigen::Index c = 0; c < centers.cols(); ++c) {
        d.rows(static_cast<Eigen::Index>(i), c) =
            centers(static_cast<Eigen::Index>(k), c) + sigma * rng.normal();
      }
      d.labels[i] = k;
    }
  }
  return d;
}

}  // namespace

GeneratedData gen_gaussian_mixture(const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind == DatasetKind::from_csv) throw ConfigError("gen_gaussian_mixture called on a CSV spec");
  Rng root(spec.seed);
  GeneratedData out;
  auto& rec = out.record;
  rec.seed = spec.seed;
  rec.noise_sigma = spec.noise_sigma;
  rec.latent_centers = latent_centers_for(spec, root.split("centers"));
  rec.mixing = make_mixing(spec, root.split("mixing"));
  rec.centers = rec.latent_centers * rec.mixing.transpose();
  out.train = sample_around(rec.centers, spec.train_per_class, spec.noise_sigma, Split::train,
                            root.split("train"));
  out.id_test = sample_around(rec.centers, spec.test_per_class, spec.noise_sigma, Split::id_test,
                              root.split("id_test"));
  return out;
}

GeneratedData gen_two_rings(const DatasetSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  GeneratedData out;
  auto& rec = out.record;
  rec.seed = spec.seed;
  rec.noise_sigma = spec.noise_sigma;
  rec.mixing = make_mixing(spec, root.split("mixing"));
  // Rings are centered at the origin; the record keeps ring radii as margins.
  rec.latent_centers = Matrix::Zero(static_cast<Eigen::Index>(spec.classes), 2);
  rec.centers = rec.latent_centers * rec.mixing.transpose();
  for (std::size_t k = 0; k < spec.classes; ++k) {
    rec.margins["ring_radius_" + std::to_string(k)] = spec.center_scale * static_cast<double>(k + 1);
  }
  auto sample = [&](std::size_t per_class, Split split, Rng rng) {
    Dataset d;
    d.class_count = spec.classes;
    d.class_names = default_class_names(spec.classes);
    d.split = split;
    const auto m = spec.classes * per_class;
    Matrix latent(static_cast<Eigen::Index>(m), 2);
    d.labels.resize(m);
    std::size_t i = 0;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      const double radius = spec.center_scale * static_cast<double>(k + 1);
      for (std::size_t s = 0; s < per_class; ++s, ++i) {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        latent(static_cast<Eigen::Index>(i), 0) = radius * std::cos(a);
        latent(static_cast<Eigen::Index>(i), 1) = radius * std::sin(a);
        d.labels[i] = k;
      }
    }
    d.rows = latent * rec.mixing.transpose();
    for (Eigen::Index j = 0; j < d.rows.size(); ++j) d.rows.data()[j] += spec.noise_sigma * rng.normal();
    return d;
  };
  out.train = sample(spec.train_per_class, Split::train, root.split("train"));
  out.id_test = sample(spec.test_per_class, Split::id_test, root.split("id_test"));
  return out;
}

GeneratedData generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DatasetKind::gaussian_mixture: return gen_gaussian_mixture(spec);
    case DatasetKind::two_rings: return gen_two_rings(spec);
    case DatasetKind::from_csv: break;
  }
  GeneratedData out;
  out.record.seed = spec.seed;
  Dataset all = load_embeddings_csv(spec.csv_train);
  if (!spec.csv_test.empty()) {
    out.train = std::move(all);
    out.id_test = load_embeddings_csv(spec.csv_test, out.train.class_names);
    out.train.class_count = out.id_test.class_count;
    out.train.class_names = out.id_test.class_names;
  } else {
    // Every fifth row is held out as ID test data.
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 5 == 4 ? te : tr).push_back(i);
    auto take = [&](const std::vector<std::size_t>& idx, Split split) {
      Dataset d;
      d.rows = gather_rows(all.rows, idx);
      for (auto i : idx) d.labels.push_back(all.labels[i]);
      d.class_count = all.class_count;
      d.class_names = all.class_names;
      d.split = split;
      return d;
    };
    out.train = take(tr, Split::train);
    out.id_test = take(te, Split::id_test);
  }
  out.train.split = Split::train;
  out.id_test.split = Split::id_test;
  return out;
}

namespace {

double min_distance_to_rows(const Vector& x, const Matrix& rows) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    best = std::min(best, (rows.row(r).transpose() - x).norm());
  }
  return best;
}

Dataset make_ood_dataset(Matrix rows) {
  Dataset d;
  d.rows = std::move(rows);
  d.labels.assign(static_cast<std::size_t>(d.rows.rows()), 0);
  d.class_count = 1;
  d.class_names = {"ood"};
  d.split = Split::ood_test;
  return d;
}

Dataset held_out_classes(const DatasetSpec& spec, const OodSpec& ood, GeneratorRecord& rec, Rng rng) {
  if (spec.kind != DatasetKind::gaussian_mixture) {
    throw ConfigError("held_out_classes requires a gaussian_mixture dataset");
  }
  const auto v = static_cast<Eigen::Index>(spec.classes);
  const auto l = static_cast<Eigen::Index>(spec.latent_dim);
  const double declared_margin = kHeldOutMarginSigmas * spec.noise_sigma;
  Matrix latent(v, l);
  if (spec.classes <= 8 && spec.latent_dim == 2) {
    // Midway between neighbouring ID centers on the same circle.
    for (Eigen::Index k = 0; k < v; ++k) {
      const double angle =
          2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(v);
      latent(k, 0) = spec.center_scale * std::cos(angle);
      latent(k, 1) = spec.center_scale * std::sin(angle);
    }
  } else {
    Rng crng = rng.split("held_out_centers");
    for (Eigen::Index k = 0; k < v; ++k) {
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw ConfigError("cannot place held-out centers with the required margin");
        Vector c(l);
        for (Eigen::Index i = 0; i < l; ++i) c[i] = spec.center_scale * crng.normal();
        if (min_distance_to_rows(c, rec.latent_centers) >= declared_margin) {
          latent.row(k) = c.transpose();
          break;
        }
      }
    }
  }
  const Matrix centers = latent * rec.mixing.transpose();
  double center_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < v; ++k) {
    center_margin = std::min(center_margin, min_distance_to_rows(centers.row(k).transpose(), rec.centers));
  }
  if (center_margin < declared_margin) {
    throw ConfigError("held-out centers are closer than the declared margin; increase center_scale "
                      "or reduce noise_sigma");
  }
  rec.ood_centers["held_out_classes"] = centers;
  rec.margins["held_out_declared"] = declared_margin;
  rec.margins["held_out_center_min_distance"] = center_margin;

  const double ball = 3.0 * spec.noise_sigma;
  Matrix rows(static_cast<Eigen::Index>(ood.count), centers.cols());
  Rng srng = rng.split("held_out_samples");
  for (std::size_t i = 0; i < ood.count; ++i) {
    const auto k = static_cast<Eigen::Index>(i % spec.classes);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("held-out samples keep landing inside ID classes");
      Vector x = centers.row(k).transpose();
      for (Eigen::Index c = 0; c < x.size(); ++c) x[c] += spec.noise_sigma * srng.normal();
      if (min_distance_to_rows(x, rec.centers) > ball) {
        rows.row(static_cast<Eigen::Index>(i)) = x.transpose();
        break;
      }
    }
  }
  double sample_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    sample_margin = std::min(sample_margin, min_distance_to_rows(rows.row(r).transpose(), rec.centers));
  }
  if (!(sample_margin > ball)) throw std::logic_error("held-out sample inside an ID 3-sigma ball");
  rec.margins["held_out_sample_min_distance"] = sample_margin;
  return make_ood_dataset(std::move(rows));
}

Dataset radial_shift(const DatasetSpec& spec, const GeneratedData& id, const OodSpec& ood,
                     GeneratorRecord& rec, Rng rng) {
  if (!(ood.radial_factor >= 2.0)) throw ConfigError("radial_shift factor must be >= 2");
  const auto d = static_cast<Eigen::Index>(id.train.dim());
  // Scale about the centroid of the training data.
  const Vector origin = id.train.rows.colwise().mean().transpose();
  Matrix rows(static_cast<Eigen::Index>(ood.count), d);
  for (std::size_t i = 0; i < ood.count; ++i) {
    const auto pick = rng.index(id.train.size());
    Vector x = id.train.rows.row(static_cast<Eigen::Index>(pick)).transpose();
    for (Eigen::Index c = 0; c < d; ++c) x[c] += spec.noise_sigma * rng.normal();
    rows.row(static_cast<Eigen::Index>(i)) = (origin + ood.radial_factor * (x - origin)).transpose();
  }
  rec.margins["radial_factor"] = ood.radial_factor;
  return make_ood_dataset(std::move(rows));
}

Dataset uniform_box(const GeneratedData& id, const OodSpec& ood, GeneratorRecord& rec, Rng rng) {
  if (!(ood.box_inflation > 1.0)) throw ConfigError("uniform_box inflation must be > 1");
  const Vector lo = id.train.rows.colwise().minCoeff().transpose();
  const Vector hi = id.train.rows.colwise().maxCoeff().transpose();
  const Vector mid = 0.5 * (lo + hi);
  const Vector half = 0.5 * (hi - lo);
  if ((half.array() <= 0.0).any()) {
    throw ConfigError("uniform_box: ID bounding box has zero extent, its complement has zero volume");
  }
  const Vector big_half = ood.box_inflation * half;
  Matrix rows(static_cast<Eigen::Index>(ood.count), lo.size());
  for (std::size_t i = 0; i < ood.count; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) throw ConfigError("uniform_box rejection sampling did not terminate");
      Vector x(lo.size());
      for (Eigen::Index c = 0; c < x.size(); ++c) x[c] = rng.uniform(mid[c] - big_half[c], mid[c] + big_half[c]);
      const bool inside = ((x.array() >= lo.array()) && (x.array() <= hi.array())).all();
      if (!inside) {
        rows.row(static_cast<Eigen::Index>(i)) = x.transpose();
        break;
      }
    }
  }
  rec.margins["box_inflation"] = ood.box_inflation;
  return make_ood_dataset(std::move(rows));
}

}  // namespace

Dataset gen_ood_testset(const DatasetSpec& spec, const GeneratedData& id, const OodSpec& ood,
                        GeneratorRecord& record) {
  if (ood.count < 1) throw ConfigError("OOD test set needs at least one sample");
  Rng rng = Rng(ood.seed).split(to_string(ood.kind));
  switch (ood.kind) {
    case ShiftKind::held_out_classes: return held_out_classes(spec, ood, record, rng);
    case ShiftKind::radial_shift: return radial_shift(spec, id, ood, record, rng);
    case ShiftKind::uniform_box: return uniform_box(id, ood, record, rng);
  }
  throw ConfigError("unknown shift kind");
}

// -- toy decoder ------------------------------------------------------------

double ToyDecoder::min_singular_value() const {
  if (weight.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(weight);
  return svd.singularValues().minCoeff();
}

void ToyDecoder::validate() const {
  if (bias.size() != weight.rows()) throw DimensionError("decoder bias length differs from output dim");
  if (weight.rows() < weight.cols()) throw DimensionError("decoder needs input_dim >= latent dim");
  if (!(min_singular_value() > 1e-8)) throw DimensionError("decoder matrix is not full column rank");
}

nlohmann::json ToyDecoder::to_json() const {
  return {{"W", matrix_to_json(weight)}, {"bias", vector_to_json(bias)}};
}

ToyDecoder ToyDecoder::from_json(const nlohmann::json& j) {
  ToyDecoder d{matrix_from_json(j.at("W")), vector_from_json(j.at("bias"))};
  d.validate();
  return d;
}

ToyDecoder fit_toy_decoder(const Matrix& latent, const Matrix& inputs) {
  if (latent.rows() != inputs.rows()) throw DimensionError("decoder fit: row counts differ");
  if (latent.rows() <= latent.cols()) throw DimensionError("decoder fit: too few samples");
  Matrix design(latent.rows(), latent.cols() + 1);
  design.leftCols(latent.cols()) = latent;
  design.col(latent.cols()).setOnes();
  const Matrix coef = design.colPivHouseholderQr().solve(inputs);  // (n+1) x D
  ToyDecoder d;
  d.weight = coef.topRows(latent.cols()).transpose();
  d.bias = coef.row(latent.cols()).transpose();
  d.validate();
  return d;
}

Vector toy_decode(const ToyDecoder& decoder, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != decoder.latent_dim()) {
    throw DimensionError("toy_decode: feature has dim " + std::to_string(z.size()) + ", decoder expects " +
                         std::to_string(decoder.latent_dim()));
  }
  return decoder.weight * z + decoder.bias;
}

Matrix toy_decode(const ToyDecoder& decoder, const Matrix& z_rows) {
  if (static_cast<std::size_t>(z_rows.cols()) != decoder.latent_dim()) {
    throw DimensionError("toy_decode: features have dim " + std::to_string(z_rows.cols()) +
                         ", decoder expects " + std::to_string(decoder.latent_dim()));
  }
  Matrix x = z_rows * decoder.weight.transpose();
  x.rowwise() += decoder.bias.transpose();
  return x;
}

// -- files ------------------------------------------------------------------

void write_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  char buf[64];
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto y = d.labels[i];
    os << (y < d.class_names.size() ? d.class_names[y] : std::to_string(y));
    for (Eigen::Index c = 0; c < d.rows.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", d.rows(static_cast<Eigen::Index>(i), c));
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

double parse_double(const std::string& field, std::size_t line_no) {
  const auto s = trim(field);
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw IoError("line " + std::to_string(line_no) + ": non-numeric field '" + s + "'");
  }
  return v;
}

}  // namespace

Dataset load_embeddings_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& known_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  Dataset d;
  d.class_names = known_classes;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < known_classes.size(); ++i) index.emplace(known_classes[i], i);

  std::vector<std::vector<double>> values;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw IoError("line " + std::to_string(line_no) + ": need a label and values");
    if (width == 0) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw IoError("line " + std::to_string(line_no) + ": ragged row with " +
                    std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    const auto name = trim(fields[0]);
    auto [it, inserted] = index.emplace(name, d.class_names.size());
    if (inserted) d.class_names.push_back(name);
    d.labels.push_back(it->second);
    std::vector<double> row;
    for (std::size_t c = 1; c < fields.size(); ++c) row.push_back(parse_double(fields[c], line_no));
    values.push_back(std::move(row));
  }
  if (values.empty()) throw IoError(path.string() + ": empty file");
  d.rows.resize(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < values[r].size(); ++c) {
      d.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
    }
  }
  d.class_count = d.class_names.size();
  return d;
}

std::vector<FeatureRecord> load_features_bin(const std::filesystem::path& path) {
  static constexpr char kMagic[9] = "BOODFEAT";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binio::expect_magic(is, kMagic);
  const auto version = binio::read_le<std::uint32_t>(is);
  if (version != 1) throw IoError("unsupported feature file version " + std::to_string(version));
  const auto count = binio::read_le<std::uint64_t>(is);
  const auto dim = binio::read_le<std::uint32_t>(is);
  std::vector<FeatureRecord> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureRecord r;
    r.origin_index = binio::read_le<std::uint64_t>(is);
    r.origin_label = binio::read_le<std::uint32_t>(is);
    r.flip_step = binio::read_le<std::uint32_t>(is);
    r.z.resize(dim);
    for (std::uint32_t k = 0; k < dim; ++k) r.z[k] = binio::read_le<double>(is);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bood

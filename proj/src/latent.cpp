#include "bood/latent.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "bood/error.hpp"

namespace bood {

AnchorMode parse_anchor_mode(const std::string& s) {
  if (s == "random_orthonormal") return AnchorMode::random_orthonormal;
  if (s == "from_file") return AnchorMode::from_file;
  throw ConfigError("unknown anchor mode '" + s + "'");
}

std::string to_string(AnchorMode m) {
  return m == AnchorMode::random_orthonormal ? "random_orthonormal" : "from_file";
}

void AnchorSet::validate() const {
  if (class_count() < 2) throw ConfigError("anchor set needs at least 2 classes");
  if (class_names.size() != class_count()) throw DimensionError("anchor names and vectors differ in count");
  std::set<std::string> seen;
  for (const auto& n : class_names) {
    if (!seen.insert(n).second) throw ConfigError("duplicate anchor class name '" + n + "'");
  }
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    if (std::abs(vectors.row(r).norm() - 1.0) > 1e-12) {
      throw std::invalid_argument("anchor " + class_names[static_cast<std::size_t>(r)] + " is not unit norm");
    }
    for (Eigen::Index q = 0; q < r; ++q) {
      if (vectors.row(r) == vectors.row(q)) throw ConfigError("anchors must be pairwise distinct");
    }
  }
}

AnchorSet make_orthonormal_anchors(std::size_t classes, std::size_t dim, std::uint64_t seed,
                                   std::vector<std::string> class_names) {
  if (dim < classes) {
    throw ConfigError("orthonormal anchors need dim >= classes (dim " + std::to_string(dim) + ", classes " +
                      std::to_string(classes) + ")");
  }
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(dim);
  const auto v = static_cast<Eigen::Index>(classes);
  Matrix g(n, v);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, v);
  AnchorSet a;
  a.vectors = q.transpose();
  for (Eigen::Index r = 0; r < a.vectors.rows(); ++r) a.vectors.row(r).normalize();
  if (class_names.empty()) {
    for (std::size_t k = 0; k < classes; ++k) class_names.push_back("class_" + std::to_string(k));
  }
  a.class_names = std::move(class_names);
  a.validate();
  return a;
}

AnchorSet load_anchors_csv(const std::filesystem::path& path) {
  Dataset rows = load_embeddings_csv(path);
  if (rows.class_count != rows.size()) throw ConfigError("duplicate class names in anchor file " + path.string());
  AnchorSet a;
  a.class_names = rows.class_names;
  a.vectors = rows.rows;
  for (Eigen::Index r = 0; r < a.vectors.rows(); ++r) {
    const double norm = a.vectors.row(r).norm();
    if (!(norm > kMinFeatureNorm)) throw IoError("anchor row " + std::to_string(r) + " has zero norm");
    a.vectors.row(r) /= norm;
  }
  a.validate();
  return a;
}

void write_anchors_csv(const AnchorSet& anchors, const std::filesystem::path& path) {
  Dataset d;
  d.rows = anchors.vectors;
  d.class_count = anchors.class_count();
  d.class_names = anchors.class_names;
  for (std::size_t k = 0; k < anchors.class_count(); ++k) d.labels.push_back(k);
  write_dataset_csv(d, path);
}

std::size_t argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

namespace {

double checked_norm(const Vector& z) {
  const double n = z.norm();
  if (!(n > kMinFeatureNorm)) throw std::domain_error("feature norm is (near) zero");
  return n;
}

}  // namespace

Vector cosine_logits(const AnchorSet& anchors, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != anchors.dim()) {
    throw DimensionError("feature dim " + std::to_string(z.size()) + " differs from anchor dim " +
                         std::to_string(anchors.dim()));
  }
  const double n = checked_norm(z);
  Vector out = anchors.vectors * z;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    out[j] /= n * anchors.vectors.row(j).norm();
  }
  return out;
}

CosineClassifier::CosineClassifier(AnchorSet anchors, double temperature)
    : anchors_(std::move(anchors)), temperature_(temperature) {
  if (!(temperature_ > 0.0)) throw ConfigError("temperature must be > 0");
}

Vector CosineClassifier::logits(const Vector& z) const { return cosine_logits(anchors_, z); }

double CosineClassifier::loss_and_grad(const Vector& z, std::size_t y, Vector& grad) const {
  if (y >= class_count()) throw std::out_of_range("label out of range");
  const double n = checked_norm(z);
  const Vector u = z / n;
  const Vector s = cosine_logits(anchors_, z) / temperature_;
  const double m = s.maxCoeff();
  const Vector e = (s.array() - m).exp().matrix();
  const double sum = e.sum();
  const double loss = std::log(sum) + m - s[static_cast<Eigen::Index>(y)];
  Vector p = e / sum;
  p[static_cast<Eigen::Index>(y)] -= 1.0;
  // Anchors are unit norm, so d(s_j)/du = a_j / t.
  const Vector du = anchors_.vectors.transpose() * p / temperature_;
  grad = (du - u * u.dot(du)) / n;
  return loss;
}

void EncoderModel::validate() const {
  check_shapes(mlp.spec, mlp.params);
  anchors.validate();
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (mlp.spec.output_width() != anchors.dim()) {
    throw DimensionError("encoder output width " + std::to_string(mlp.spec.output_width()) +
                         " differs from anchor dim " + std::to_string(anchors.dim()));
  }
}

EncoderModel make_encoder(const MlpSpec& spec, AnchorSet anchors, double temperature, Rng& rng) {
  EncoderModel m{Mlp{spec, init_params(spec, rng)}, std::move(anchors), temperature};
  m.validate();
  return m;
}

HeadResult latent_loss_head(const AnchorSet& anchors, double temperature, const Matrix& outputs,
                            std::span<const std::size_t> labels) {
  if (outputs.rows() == 0) throw std::invalid_argument("empty batch");
  if (static_cast<std::size_t>(outputs.rows()) != labels.size()) throw DimensionError("label count mismatch");
  const CosineClassifier clf(anchors, temperature);
  HeadResult r;
  r.d_output.resize(outputs.rows(), outputs.cols());
  const double inv = 1.0 / static_cast<double>(outputs.rows());
  Vector g;
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    r.loss += clf.loss_and_grad(outputs.row(i).transpose(), labels[static_cast<std::size_t>(i)], g);
    r.d_output.row(i) = g.transpose() * inv;
  }
  r.loss *= inv;
  return r;
}

double latent_loss(const EncoderModel& model, const Matrix& x, std::span<const std::size_t> labels) {
  return latent_loss_head(model.anchors, model.temperature, mlp_forward(model.mlp, x), labels).loss;
}

EncoderTrainResult train_encoder(const Dataset& data, EncoderModel model, const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("empty training set");
  for (auto y : data.labels) {
    if (y >= model.anchors.class_count()) {
      throw std::out_of_range("label " + std::to_string(y) + " has no anchor");
    }
  }
  Rng rng(cfg.seed);
  const auto steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const auto total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
  std::size_t step = 0;
  std::vector<EpochStats> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : epoch_batches(data.size(), cfg.batch_size, cfg.shuffle, rng)) {
      const Matrix x = gather_rows(data.rows, batch);
      std::vector<std::size_t> y;
      y.reserve(batch.size());
      for (auto i : batch) y.push_back(data.labels[i]);
      const auto trace = mlp_forward_trace(model.mlp, x);
      auto head = latent_loss_head(model.anchors, model.temperature, trace.output, y);
      for (Eigen::Index i = 0; i < trace.output.rows(); ++i) {
        if (argmax(cosine_logits(model.anchors, trace.output.row(i).transpose())) == y[static_cast<std::size_t>(i)]) {
          ++correct;
        }
      }
      loss_sum += head.loss * static_cast<double>(batch.size());
      const auto bp = mlp_backward(model.mlp, trace, head.d_output);
      sgd_step_inplace(model.mlp.params, bp.grads, cosine_lr(step, total_steps, cfg.lr_init, cfg.lr_min));
      ++step;
    }
    history.push_back({loss_sum / static_cast<double>(data.size()),
                       static_cast<double>(correct) / static_cast<double>(data.size())});
  }
  if (!model.mlp.params.all_finite()) throw std::runtime_error("encoder training diverged");
  return {std::move(model), std::move(history)};
}

std::vector<LatentFeature> encode_dataset(const EncoderModel& model, const Dataset& data) {
  const Matrix z = mlp_forward(model.mlp, data.rows);
  std::vector<LatentFeature> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    LatentFeature f{z.row(static_cast<Eigen::Index>(i)).transpose(), data.labels[i], i};
    if (!(f.z.norm() > kMinFeatureNorm)) {
      throw std::domain_error("row " + std::to_string(i) + " encodes to a degenerate (zero-norm) feature");
    }
    out.push_back(std::move(f));
  }
  return out;
}

double encoder_accuracy(const EncoderModel& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  const Matrix z = mlp_forward(model.mlp, data.rows);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector zi = z.row(static_cast<Eigen::Index>(i)).transpose();
    if (zi.norm() > kMinFeatureNorm && argmax(cosine_logits(model.anchors, zi)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace bood

#include "bood/detector.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bood/error.hpp"
#include "bood/latent.hpp"

namespace bood {

DetectorMode parse_detector_mode(const std::string& s) {
  if (s == "decoded") return DetectorMode::decoded;
  if (s == "latent") return DetectorMode::latent;
  throw ConfigError("unknown detector mode '" + s + "'");
}

std::string to_string(DetectorMode m) { return m == DetectorMode::decoded ? "decoded" : "latent"; }

void DetectorModel::validate() const {
  check_shapes(backbone.spec, backbone.params);
  check_shapes(head.spec, head.params);
  if (head.spec.input_width() != 1 || head.spec.output_width() != 1) {
    throw DimensionError("energy head must map a scalar to a scalar");
  }
}

DetectorModel make_detector(std::size_t input_dim, std::size_t classes, const DetectorArch& arch,
                            DetectorMode mode, Rng& rng) {
  MlpSpec backbone{{input_dim}, arch.activation};
  for (auto w : arch.hidden) backbone.widths.push_back(w);
  backbone.widths.push_back(classes);
  MlpSpec head{{1, arch.head_hidden, arch.head_hidden, 1}, Activation::relu};
  Rng brng = rng.split("backbone");
  Rng hrng = rng.split("energy_head");
  DetectorModel m{Mlp{backbone, init_params(backbone, brng)}, Mlp{head, init_params(head, hrng)}, mode};
  m.validate();
  return m;
}

double energy(const Vector& logits) {
  if (logits.size() == 0) throw std::invalid_argument("energy of empty logits");
  const double m = logits.maxCoeff();
  return -(m + std::log((logits.array() - m).exp().sum()));
}

Vector row_energies(const Matrix& logits) {
  Vector e(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) e[i] = energy(logits.row(i).transpose());
  return e;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

OodLossTerms ood_loss_from_phi(std::span<const double> id_phi, std::span<const double> ood_phi) {
  if (id_phi.empty() || ood_phi.empty()) throw std::invalid_argument("ood_loss needs nonempty ID and OOD batches");
  OodLossTerms t;
  // -log sigmoid(p) = softplus(-p); -log(1 - sigmoid(p)) = softplus(p)
  for (double p : id_phi) t.id_term += softplus(-p);
  for (double p : ood_phi) t.ood_term += softplus(p);
  t.id_term /= static_cast<double>(id_phi.size());
  t.ood_term /= static_cast<double>(ood_phi.size());
  return t;
}

Vector head_outputs(const DetectorModel& model, const Matrix& x) {
  const Vector e = row_energies(mlp_forward(model.backbone, x));
  const Matrix phi = mlp_forward(model.head, Matrix(e));
  return phi.col(0);
}

OodLossTerms ood_loss(const DetectorModel& model, const Matrix& id_x, const Matrix& ood_x) {
  const Vector a = head_outputs(model, id_x);
  const Vector b = head_outputs(model, ood_x);
  return ood_loss_from_phi({a.data(), static_cast<std::size_t>(a.size())},
                           {b.data(), static_cast<std::size_t>(b.size())});
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - m).exp();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p;
}

void add_inplace(MlpParams& acc, const MlpParams& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weight += g.layers[l].weight;
    acc.layers[l].bias += g.layers[l].bias;
  }
}

struct HeadPass {
  ForwardTrace trace;
  Vector energies;
};

}  // namespace

ObjectiveGrads detector_objective(const DetectorModel& model, const Matrix& id_x,
                                  std::span<const std::size_t> id_y, const Matrix& ood_x, double beta) {
  if (id_x.rows() == 0) throw std::invalid_argument("empty ID batch");
  ObjectiveGrads out;
  const auto id_trace = mlp_forward_trace(model.backbone, id_x);
  auto ce = softmax_cross_entropy(id_trace.output, id_y);
  out.ce = ce.loss;
  Matrix d_id_logits = std::move(ce.d_output);
  out.head = zeros_like(model.head.params);

  const bool have_ood = ood_x.rows() > 0;
  std::optional<ForwardTrace> ood_trace;
  Matrix d_ood_logits;
  if (have_ood) {
    ood_trace = mlp_forward_trace(model.backbone, ood_x);
    const Vector e_id = row_energies(id_trace.output);
    const Vector e_ood = row_energies(ood_trace->output);
    const auto id_head = mlp_forward_trace(model.head, Matrix(e_id));
    const auto ood_head = mlp_forward_trace(model.head, Matrix(e_ood));
    const Vector phi_id = id_head.output.col(0);
    const Vector phi_ood = ood_head.output.col(0);
    out.ood = ood_loss_from_phi({phi_id.data(), static_cast<std::size_t>(phi_id.size())},
                                {phi_ood.data(), static_cast<std::size_t>(phi_ood.size())});
    if (beta != 0.0) {
      const double n_id = static_cast<double>(phi_id.size());
      const double n_ood = static_cast<double>(phi_ood.size());
      Matrix d_phi_id(phi_id.size(), 1);
      Matrix d_phi_ood(phi_ood.size(), 1);
      for (Eigen::Index i = 0; i < phi_id.size(); ++i) d_phi_id(i, 0) = -beta * sigmoid(-phi_id[i]) / n_id;
      for (Eigen::Index i = 0; i < phi_ood.size(); ++i) d_phi_ood(i, 0) = beta * sigmoid(phi_ood[i]) / n_ood;
      const auto bp_id = mlp_backward(model.head, id_head, d_phi_id);
      const auto bp_ood = mlp_backward(model.head, ood_head, d_phi_ood);
      add_inplace(out.head, bp_id.grads);
      add_inplace(out.head, bp_ood.grads);
      // dE/dlogits = -softmax(logits)
      const Matrix p_id = softmax_rows(id_trace.output);
      const Matrix p_ood = softmax_rows(ood_trace->output);
      for (Eigen::Index i = 0; i < p_id.rows(); ++i) d_id_logits.row(i) -= bp_id.input_grad(i, 0) * p_id.row(i);
      d_ood_logits = Matrix(p_ood.rows(), p_ood.cols());
      for (Eigen::Index i = 0; i < p_ood.rows(); ++i) d_ood_logits.row(i) = -bp_ood.input_grad(i, 0) * p_ood.row(i);
    }
  }
  out.total = out.ce + (have_ood ? beta * out.ood.total() : 0.0);
  out.backbone = mlp_backward(model.backbone, id_trace, d_id_logits).grads;
  if (have_ood && beta != 0.0) add_inplace(out.backbone, mlp_backward(model.backbone, *ood_trace, d_ood_logits).grads);
  return out;
}

GradCheckReport detector_gradient_check(const DetectorModel& model, const Matrix& id_x,
                                        std::span<const std::size_t> id_y, const Matrix& ood_x, double beta,
                                        double tolerance, double h) {
  const auto analytic = detector_objective(model, id_x, id_y, ood_x, beta);
  DetectorModel probe = model;
  auto objective = [&] { return detector_objective(probe, id_x, id_y, ood_x, beta).total; };
  auto numeric_for = [&](Mlp& net) {
    MlpParams g = zeros_like(net.params);
    for (std::size_t l = 0; l < net.params.layers.size(); ++l) {
      auto probe_entries = [&](double* values, double* grads, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const double orig = values[i];
          values[i] = orig + h;
          const double up = objective();
          values[i] = orig - h;
          const double down = objective();
          values[i] = orig;
          grads[i] = (up - down) / (2.0 * h);
        }
      };
      probe_entries(net.params.layers[l].weight.data(), g.layers[l].weight.data(), g.layers[l].weight.size());
      probe_entries(net.params.layers[l].bias.data(), g.layers[l].bias.data(), g.layers[l].bias.size());
    }
    return g;
  };
  const MlpParams num_backbone = numeric_for(probe.backbone);
  const MlpParams num_head = numeric_for(probe.head);

  GradCheckReport rep;
  auto merge = [&](const MlpParams& a, const MlpParams& n, std::size_t layer_offset) {
    const Matrix none;
    auto r = compare_gradients({0.0, a, none}, {0.0, n, none}, tolerance);
    rep.max_rel_error = std::max(rep.max_rel_error, r.max_rel_error);
    rep.checked += r.checked;
    for (auto e : r.flagged) {
      e.layer += layer_offset;
      rep.flagged.push_back(e);
    }
  };
  merge(analytic.backbone, num_backbone, 0);
  merge(analytic.head, num_head, model.backbone.params.layers.size());
  return rep;
}

void DetectorTrainConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  train.validate();
}

DetectorTrainResult train_detector(const Dataset& id_train, const Matrix& ood_inputs, DetectorModel model,
                                   const DetectorTrainConfig& cfg) {
  cfg.validate();
  model.validate();
  id_train.validate();
  if (id_train.size() == 0) throw std::invalid_argument("empty ID training set");
  if (id_train.dim() != model.input_dim()) {
    throw DimensionError("ID inputs have dim " + std::to_string(id_train.dim()) + ", detector expects " +
                         std::to_string(model.input_dim()));
  }
  if (ood_inputs.rows() > 0 && static_cast<std::size_t>(ood_inputs.cols()) != model.input_dim()) {
    throw DimensionError("OOD inputs have dim " + std::to_string(ood_inputs.cols()) + ", detector (" +
                         to_string(model.mode) + " mode) expects " + std::to_string(model.input_dim()));
  }
  if (cfg.beta > 0.0 && ood_inputs.rows() == 0) throw std::invalid_argument("beta > 0 needs OOD inputs");

  Rng root(cfg.train.seed);
  Rng id_rng = root.split("id_batches");
  Rng ood_rng = root.split("ood_batches");
  const auto& tc = cfg.train;
  const auto steps_per_epoch = (id_train.size() + tc.batch_size - 1) / tc.batch_size;
  const auto total_steps = std::max<std::size_t>(1, tc.epochs * steps_per_epoch);
  const auto n_ood = static_cast<std::size_t>(ood_inputs.rows());

  std::vector<DetectorEpoch> history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> ood_order(n_ood);
    for (std::size_t i = 0; i < n_ood; ++i) ood_order[i] = i;
    if (tc.shuffle) ood_rng.shuffle(ood_order);
    std::size_t ood_cursor = 0;

    double ce_sum = 0.0, ood_sum = 0.0;
    std::size_t correct = 0, ood_batches = 0;
    for (const auto& batch : epoch_batches(id_train.size(), tc.batch_size, tc.shuffle, id_rng)) {
      const Matrix x = gather_rows(id_train.rows, batch);
      std::vector<std::size_t> y;
      for (auto i : batch) y.push_back(id_train.labels[i]);
      Matrix ood_x;
      if (n_ood > 0) {
        std::vector<std::size_t> pick;
        for (std::size_t k = 0; k < batch.size(); ++k) pick.push_back(ood_order[(ood_cursor++) % n_ood]);
        ood_x = gather_rows(ood_inputs, pick);
      }
      const auto g = detector_objective(model, x, y, ood_x, cfg.beta);
      const Matrix logits = mlp_forward(model.backbone, x);
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (argmax(logits.row(i).transpose()) == y[static_cast<std::size_t>(i)]) ++correct;
      }
      ce_sum += g.ce * static_cast<double>(batch.size());
      if (n_ood > 0) {
        ood_sum += g.ood.total();
        ++ood_batches;
      }
      const double lr = cosine_lr(step, total_steps, tc.lr_init, tc.lr_min);
      sgd_step_inplace(model.backbone.params, g.backbone, lr);
      if (cfg.beta != 0.0) sgd_step_inplace(model.head.params, g.head, lr);
      ++step;
    }
    history.push_back({ce_sum / static_cast<double>(id_train.size()),
                       ood_batches ? ood_sum / static_cast<double>(ood_batches) : 0.0,
                       static_cast<double>(correct) / static_cast<double>(id_train.size())});
  }
  if (!model.backbone.params.all_finite() || !model.head.params.all_finite()) {
    throw std::runtime_error("detector training diverged");
  }
  return {std::move(model), std::move(history)};
}

double ood_score(const DetectorModel& model, const Vector& x) {
  Matrix row = x.transpose();
  return ood_scores(model, row)[0];
}

Vector ood_scores(const DetectorModel& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
    throw DimensionError("inputs have dim " + std::to_string(x.cols()) + ", detector expects " +
                         std::to_string(model.input_dim()));
  }
  Vector phi = head_outputs(model, x);
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = sigmoid(phi[i]);
  return phi;
}

void write_score_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "sample_id,split,score\n";
  char buf[40];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    os << r.sample_id << ',' << r.split << ',' << buf << '\n';
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<ScoreRow> load_score_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("sample_id,split,score", 0) != 0) {
    throw IoError(path.string() + ": missing score header");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw IoError(path.string() + ": malformed score row");
    ScoreRow r{line.substr(0, a), line.substr(a + 1, b - a - 1), 0.0};
    try {
      r.score = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw IoError(path.string() + ": non-numeric score in row '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_detector(const DetectorModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(model.backbone, dir / "backbone.ckpt");
  save_checkpoint(model.head, dir / "energy_head.ckpt");
}

DetectorModel load_detector(const std::filesystem::path& dir, Activation activation, DetectorMode mode) {
  DetectorModel m{load_checkpoint(dir / "backbone.ckpt", activation),
                  load_checkpoint(dir / "energy_head.ckpt", Activation::relu), mode};
  m.validate();
  return m;
}

}  // namespace bood

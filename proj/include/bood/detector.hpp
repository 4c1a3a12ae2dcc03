#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bood/data.hpp"
#include "bood/nn.hpp"

namespace bood {

enum class DetectorMode { decoded, latent };

DetectorMode parse_detector_mode(const std::string& s);
std::string to_string(DetectorMode m);

/// Classifier backbone g plus the scalar energy head phi (1 -> h -> h -> 1).
struct DetectorModel {
  Mlp backbone;
  Mlp head;
  DetectorMode mode = DetectorMode::decoded;

  std::size_t input_dim() const { return backbone.spec.input_width(); }
  std::size_t class_count() const { return backbone.spec.output_width(); }
  void validate() const;
};

struct DetectorArch {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t head_hidden = 16;
  Activation activation = Activation::relu;
};

DetectorModel make_detector(std::size_t input_dim, std::size_t classes, const DetectorArch& arch,
                            DetectorMode mode, Rng& rng);

/// -log(sum_k exp(logit_k)), computed with max subtraction.
double energy(const Vector& logits);
Vector row_energies(const Matrix& logits);

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

struct OodLossTerms {
  double id_term = 0.0;   // mean of -log sigmoid(phi) over ID
  double ood_term = 0.0;  // mean of -log(1 - sigmoid(phi)) over OOD
  double total() const { return id_term + ood_term; }
};

/// Regularization loss from head outputs phi(E) on ID and OOD samples.
OodLossTerms ood_loss_from_phi(std::span<const double> id_phi, std::span<const double> ood_phi);

OodLossTerms ood_loss(const DetectorModel& model, const Matrix& id_x, const Matrix& ood_x);

/// phi(E(g(x))) per row.
Vector head_outputs(const DetectorModel& model, const Matrix& x);

struct ObjectiveGrads {
  double total = 0.0;
  double ce = 0.0;
  OodLossTerms ood;
  MlpParams backbone;
  MlpParams head;
};

/// CE(id) + beta * L_ood and its gradients. An empty ood_x drops the
/// regularizer entirely, as does beta == 0 (terms are still reported).
ObjectiveGrads detector_objective(const DetectorModel& model, const Matrix& id_x,
                                  std::span<const std::size_t> id_y, const Matrix& ood_x, double beta);

GradCheckReport detector_gradient_check(const DetectorModel& model, const Matrix& id_x,
                                        std::span<const std::size_t> id_y, const Matrix& ood_x, double beta,
                                        double tolerance = 1e-4, double h = 1e-6);

struct DetectorTrainConfig {
  double beta = 2.5;
  TrainConfig train;

  void validate() const;
};

struct DetectorEpoch {
  double ce_loss = 0.0;
  double ood_loss = 0.0;  // unweighted
  double id_acc = 0.0;
};

struct DetectorTrainResult {
  DetectorModel model;
  std::vector<DetectorEpoch> history;
};

/// ood_inputs must live in the detector's input space. Each ID batch is
/// paired with an equally sized OOD batch drawn cyclically from a per-epoch
/// shuffle of ood_inputs.
DetectorTrainResult train_detector(const Dataset& id_train, const Matrix& ood_inputs, DetectorModel model,
                                   const DetectorTrainConfig& cfg);

/// sigmoid(phi(E(g(x)))); higher means more ID-like.
double ood_score(const DetectorModel& model, const Vector& x);
Vector ood_scores(const DetectorModel& model, const Matrix& x);

struct ScoreRow {
  std::string sample_id;
  std::string split;  // id_test | ood_test
  double score = 0.0;
};

/// CSV columns sample_id,split,score.
void write_score_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);
std::vector<ScoreRow> load_score_csv(const std::filesystem::path& path);

void save_detector(const DetectorModel& model, const std::filesystem::path& dir);
DetectorModel load_detector(const std::filesystem::path& dir, Activation activation, DetectorMode mode);

}  // namespace bood

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bood/data.hpp"
#include "bood/nn.hpp"

namespace bood {

/// One unit-norm anchor embedding per class, stored as the rows of `vectors`.
struct AnchorSet {
  std::vector<std::string> class_names;
  Matrix vectors;  // V x n

  std::size_t class_count() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
  void validate() const;
};

enum class AnchorMode { random_orthonormal, from_file };

AnchorMode parse_anchor_mode(const std::string& s);
std::string to_string(AnchorMode m);

AnchorSet make_orthonormal_anchors(std::size_t classes, std::size_t dim, std::uint64_t seed,
                                   std::vector<std::string> class_names = {});
/// CSV rows "name,v1,...,vn"; each row is normalized.
AnchorSet load_anchors_csv(const std::filesystem::path& path);
void write_anchors_csv(const AnchorSet& anchors, const std::filesystem::path& path);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const Vector& v);

/// Features with norm at or below this are rejected as degenerate.
inline constexpr double kMinFeatureNorm = 1e-9;

/// Cosine similarity of z to every anchor.
Vector cosine_logits(const AnchorSet& anchors, const Vector& z);

/// The classifier that the boundary search and outlier synthesis attack.
class FeatureClassifier {
 public:
  virtual ~FeatureClassifier() = default;
  virtual std::size_t class_count() const = 0;
  virtual Vector logits(const Vector& z) const = 0;
  /// Loss l(f(z), y) and its gradient with respect to z.
  virtual double loss_and_grad(const Vector& z, std::size_t y, Vector& grad) const = 0;

  std::size_t predict(const Vector& z) const { return argmax(logits(z)); }
};

/// Cosine classifier with softmax cross-entropy over (cosine logits / t).
class CosineClassifier final : public FeatureClassifier {
 public:
  CosineClassifier(AnchorSet anchors, double temperature);

  std::size_t class_count() const override { return anchors_.class_count(); }
  Vector logits(const Vector& z) const override;
  double loss_and_grad(const Vector& z, std::size_t y, Vector& grad) const override;

  const AnchorSet& anchors() const { return anchors_; }
  double temperature() const { return temperature_; }

 private:
  AnchorSet anchors_;
  double temperature_;
};

struct EncoderModel {
  Mlp mlp;
  AnchorSet anchors;
  double temperature = 1.0;

  void validate() const;
  CosineClassifier classifier() const { return CosineClassifier(anchors, temperature); }
};

EncoderModel make_encoder(const MlpSpec& spec, AnchorSet anchors, double temperature, Rng& rng);

/// Contrastive anchor-alignment loss over raw encoder outputs. d_output is
/// the gradient with respect to the raw (un-normalized) outputs.
HeadResult latent_loss_head(const AnchorSet& anchors, double temperature, const Matrix& outputs,
                            std::span<const std::size_t> labels);

double latent_loss(const EncoderModel& model, const Matrix& x, std::span<const std::size_t> labels);

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EncoderTrainResult {
  EncoderModel model;
  std::vector<EpochStats> history;
};

EncoderTrainResult train_encoder(const Dataset& data, EncoderModel model, const TrainConfig& cfg);

struct LatentFeature {
  Vector z;  // raw encoder output
  std::size_t label = 0;
  std::size_t source_index = 0;
};

std::vector<LatentFeature> encode_dataset(const EncoderModel& model, const Dataset& data);

/// Fraction of rows whose cosine prediction equals the label.
double encoder_accuracy(const EncoderModel& model, const Dataset& data);

}  // namespace bood

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bood/boundary.hpp"
#include "bood/latent.hpp"

namespace bood {

struct SynthesisConfig {
  double alpha = 0.015;
  std::size_t extra_steps = 2;  // c
  std::size_t max_steps = 100;  // K, cap on the pre-flip loop

  void validate() const;
};

struct SynthesizedOutlier {
  Vector z_ood;
  std::size_t origin_index = 0;
  std::size_t origin_label = 0;
  std::size_t flip_step = 0;
  std::size_t depth = 0;  // ascent steps taken after the flip
  std::size_t flip_prediction = 0;
  std::size_t final_prediction = 0;
  std::vector<Vector> trajectory;  // start, every step, ending at z_ood; optional

  bool flipped_back() const { return final_prediction == origin_label; }
};

class SynthesisError : public std::runtime_error {
 public:
  enum class Kind { already_misclassified, unreachable_boundary };
  SynthesisError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Ascends until the prediction leaves y, then takes exactly c more steps.
SynthesizedOutlier synthesize_ood(const FeatureClassifier& clf, const LatentFeature& feature,
                                  const SynthesisConfig& cfg, bool keep_trajectory = false);

/// Same as synthesize_ood, but emits one outlier per depth c, c+1, ...,
/// c + count - 1, all continuing from the same flip.
std::vector<SynthesizedOutlier> synthesize_depths(const FeatureClassifier& clf, const LatentFeature& feature,
                                                  const SynthesisConfig& cfg, std::size_t count,
                                                  bool keep_trajectory = false);

struct SynthesisFailure {
  std::size_t origin_index = 0;
  SynthesisError::Kind kind = SynthesisError::Kind::already_misclassified;
  std::string message;
};

struct SynthesisBatch {
  std::vector<SynthesizedOutlier> outliers;  // ordered by (origin_index, depth)
  std::vector<SynthesisFailure> failures;
  std::size_t flipped_back = 0;

  double flip_back_rate() const {
    return outliers.empty() ? 0.0 : static_cast<double>(flipped_back) / static_cast<double>(outliers.size());
  }
};

SynthesisBatch synthesize_batch(const FeatureClassifier& clf, std::vector<LatentFeature> selected,
                                const SynthesisConfig& cfg, std::size_t per_origin_count = 1,
                                std::size_t threads = 1, bool keep_trajectory = false);

enum class FeatureFormat { binary, jsonl, both };

FeatureFormat parse_feature_format(const std::string& s);

/// Binary layout (little-endian): "BOODFEAT", u32 version, u64 count, u32 dim,
/// then per record u64 origin_index, u32 origin_label, u32 flip_step and dim
/// doubles. The JSON-lines sibling carries the same fields per line.
void export_features(const std::vector<SynthesizedOutlier>& outliers, const std::filesystem::path& path,
                     FeatureFormat format = FeatureFormat::both);

/// Path of the JSON-lines sibling written next to a binary feature file.
std::filesystem::path jsonl_sibling(const std::filesystem::path& bin_path);

}  // namespace bood

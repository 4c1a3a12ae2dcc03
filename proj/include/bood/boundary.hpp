#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "bood/latent.hpp"

namespace bood {

struct BoundaryConfig {
  double alpha = 0.015;
  std::size_t max_steps = 100;  // K
  double select_percent = 5.0;  // r

  void validate() const;
};

/// One signed-gradient ascent step: z + alpha * sign(grad_z l(f(z), y)),
/// with sign(0) = 0.
Vector perturb_step(const FeatureClassifier& clf, const Vector& z, std::size_t y, double alpha);

struct DistanceEstimate {
  std::optional<std::size_t> steps;  // empty when the prediction never flipped
  Vector final_z;                    // iterate at the flip, or after K steps
  bool crossed() const { return steps.has_value(); }
};

/// Number of ascent steps until the prediction differs from y; 0 when the
/// feature is already misclassified.
DistanceEstimate estimate_distance(const FeatureClassifier& clf, const Vector& z, std::size_t y,
                                   const BoundaryConfig& cfg);

struct DistanceRecord {
  std::size_t source_index = 0;
  std::size_t label = 0;
  std::optional<std::size_t> steps;
  Vector final_z;
  bool crossed() const { return steps.has_value(); }
};

using DistanceTable = std::vector<DistanceRecord>;

/// Estimates every feature independently; the table is in input order
/// regardless of `threads`.
DistanceTable estimate_distances(const FeatureClassifier& clf, const std::vector<LatentFeature>& features,
                                 const BoundaryConfig& cfg, std::size_t threads = 1);

struct DistanceSummary {
  std::size_t total = 0;
  std::size_t never_crossed = 0;
  std::size_t already_misclassified = 0;
  double mean_steps = 0.0;  // over crossed entries
  std::map<std::size_t, std::size_t> histogram;
};

DistanceSummary summarize(const DistanceTable& table);

/// Entries with the smallest r% of step counts among crossed entries, ordered
/// by (steps, source_index); the count is ceil(r/100 * crossed).
std::vector<DistanceRecord> select_boundary(const DistanceTable& table, double percent);

/// CSV columns source_index,label,steps,crossed; never-crossed rows have
/// steps = -1 and crossed = 0.
void write_distance_csv(const DistanceTable& table, const std::filesystem::path& path);
DistanceTable load_distance_csv(const std::filesystem::path& path);

}  // namespace bood

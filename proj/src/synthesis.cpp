#include "bood/synthesis.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "json.hpp"

#include "bood/binary_io.hpp"
#include "bood/error.hpp"
#include "bood/parallel.hpp"

namespace bood {

void SynthesisConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("synthesis alpha must be > 0");
  if (max_steps < 1) throw ConfigError("synthesis K must be >= 1");
}

std::vector<SynthesizedOutlier> synthesize_depths(const FeatureClassifier& clf, const LatentFeature& feature,
                                                  const SynthesisConfig& cfg, std::size_t count,
                                                  bool keep_trajectory) {
  cfg.validate();
  if (count < 1) throw ConfigError("per-origin outlier count must be >= 1");
  const auto y = feature.label;
  if (clf.predict(feature.z) != y) {
    throw SynthesisError(SynthesisError::Kind::already_misclassified,
                         "feature " + std::to_string(feature.source_index) + " is already misclassified");
  }
  std::vector<Vector> path;
  if (keep_trajectory) path.push_back(feature.z);

  Vector z = feature.z;
  std::size_t flip_step = 0;
  for (std::size_t k = 1; k <= cfg.max_steps; ++k) {
    z = perturb_step(clf, z, y, cfg.alpha);
    if (keep_trajectory) path.push_back(z);
    if (clf.predict(z) != y) {
      flip_step = k;
      break;
    }
  }
  if (flip_step == 0) {
    throw SynthesisError(SynthesisError::Kind::unreachable_boundary,
                         "feature " + std::to_string(feature.source_index) + " did not cross the boundary within " +
                             std::to_string(cfg.max_steps) + " steps");
  }
  const auto flip_prediction = clf.predict(z);

  std::vector<SynthesizedOutlier> out;
  const auto last_depth = cfg.extra_steps + count - 1;
  for (std::size_t depth = 0;; ++depth) {
    if (depth >= cfg.extra_steps) {
      SynthesizedOutlier o;
      o.z_ood = z;
      o.origin_index = feature.source_index;
      o.origin_label = y;
      o.flip_step = flip_step;
      o.depth = depth;
      o.flip_prediction = flip_prediction;
      o.final_prediction = clf.predict(z);
      if (keep_trajectory) o.trajectory = path;
      out.push_back(std::move(o));
    }
    if (depth == last_depth) break;
    z = perturb_step(clf, z, y, cfg.alpha);
    if (keep_trajectory) path.push_back(z);
  }
  return out;
}

SynthesizedOutlier synthesize_ood(const FeatureClassifier& clf, const LatentFeature& feature,
                                  const SynthesisConfig& cfg, bool keep_trajectory) {
  return std::move(synthesize_depths(clf, feature, cfg, 1, keep_trajectory).front());
}

SynthesisBatch synthesize_batch(const FeatureClassifier& clf, std::vector<LatentFeature> selected,
                                const SynthesisConfig& cfg, std::size_t per_origin_count, std::size_t threads,
                                bool keep_trajectory) {
  if (selected.empty()) throw std::invalid_argument("no features selected for synthesis");
  cfg.validate();
  std::stable_sort(selected.begin(), selected.end(),
                   [](const LatentFeature& a, const LatentFeature& b) { return a.source_index < b.source_index; });
  std::vector<std::vector<SynthesizedOutlier>> results(selected.size());
  std::vector<std::optional<SynthesisFailure>> failures(selected.size());
  parallel_for(selected.size(), threads, [&](std::size_t i) {
    try {
      results[i] = synthesize_depths(clf, selected[i], cfg, per_origin_count, keep_trajectory);
    } catch (const SynthesisError& e) {
      failures[i] = SynthesisFailure{selected[i].source_index, e.kind(), e.what()};
    }
  });
  SynthesisBatch batch;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (failures[i]) batch.failures.push_back(*failures[i]);
    for (auto& o : results[i]) {
      if (o.flipped_back()) ++batch.flipped_back;
      batch.outliers.push_back(std::move(o));
    }
  }
  return batch;
}

FeatureFormat parse_feature_format(const std::string& s) {
  if (s == "binary") return FeatureFormat::binary;
  if (s == "jsonl") return FeatureFormat::jsonl;
  if (s == "both") return FeatureFormat::both;
  throw ConfigError("unknown feature format '" + s + "'");
}

std::filesystem::path jsonl_sibling(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  p.replace_extension(".jsonl");
  return p;
}

namespace {

constexpr char kFeatureMagic[9] = "BOODFEAT";

void write_binary(const std::vector<SynthesizedOutlier>& outliers, std::size_t dim,
                  const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_magic(os, kFeatureMagic);
  binio::write_le<std::uint32_t>(os, 1);
  binio::write_le<std::uint64_t>(os, outliers.size());
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dim));
  for (const auto& o : outliers) {
    binio::write_le<std::uint64_t>(os, o.origin_index);
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(o.origin_label));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(o.flip_step));
    for (Eigen::Index i = 0; i < o.z_ood.size(); ++i) binio::write_le(os, o.z_ood[i]);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

void write_jsonl(const std::vector<SynthesizedOutlier>& outliers, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& o : outliers) {
    nlohmann::json j;
    j["origin_index"] = o.origin_index;
    j["origin_label"] = o.origin_label;
    j["flip_step"] = o.flip_step;
    j["z"] = std::vector<double>(o.z_ood.data(), o.z_ood.data() + o.z_ood.size());
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

void export_features(const std::vector<SynthesizedOutlier>& outliers, const std::filesystem::path& path,
                     FeatureFormat format) {
  if (outliers.empty()) throw std::invalid_argument("no outliers to export");
  const auto dim = static_cast<std::size_t>(outliers.front().z_ood.size());
  for (const auto& o : outliers) {
    if (static_cast<std::size_t>(o.z_ood.size()) != dim) {
      throw DimensionError("outlier from origin " + std::to_string(o.origin_index) + " has dim " +
                           std::to_string(o.z_ood.size()) + ", expected " + std::to_string(dim));
    }
  }
  switch (format) {
    case FeatureFormat::binary: write_binary(outliers, dim, path); break;
    case FeatureFormat::jsonl: write_jsonl(outliers, path); break;
    case FeatureFormat::both:
      write_binary(outliers, dim, path);
      write_jsonl(outliers, jsonl_sibling(path));
      break;
  }
}

}  // namespace bood

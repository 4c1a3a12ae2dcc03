#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bood/boundary.hpp"
#include "bood/data.hpp"
#include "bood/detector.hpp"
#include "bood/eval.hpp"
#include "bood/latent.hpp"
#include "bood/synthesis.hpp"

namespace bood {

inline constexpr const char* kToolVersion = "0.3.0";

struct AnchorsConfig {
  AnchorMode mode = AnchorMode::random_orthonormal;
  std::string path;
};

struct EncoderConfig {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t latent_dim = 8;
  Activation activation = Activation::relu;
  double temperature = 1.0;
  TrainConfig train;
};

struct SynthesisSection {
  SynthesisConfig config;
  std::size_t per_origin_count = 1;
  FeatureFormat format = FeatureFormat::both;
};

struct DetectorSection {
  DetectorMode mode = DetectorMode::decoded;
  DetectorArch arch;
  double beta = 2.5;
  TrainConfig train;
};

struct EvalConfig {
  double tpr_target = 0.95;
  std::string score = "auto";  // auto | detector | energy | msp
  std::vector<ShiftKind> ood_sets = {ShiftKind::held_out_classes, ShiftKind::radial_shift,
                                     ShiftKind::uniform_box};
  std::size_t ood_count = 1600;
  double radial_factor = 2.0;
  double box_inflation = 1.5;

  /// "auto" resolves to the energy head when it was trained (beta > 0) and to
  /// the raw energy score otherwise.
  ScoreKind resolved_score(double beta) const;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "runs/default";
  std::size_t threads = 1;
  DatasetSpec data;
  AnchorsConfig anchors;
  EncoderConfig encoder;
  BoundaryConfig boundary;
  SynthesisSection synthesis;
  DetectorSection detector;
  EvalConfig eval;

  /// Propagates the global seed into every stage and checks all sections.
  void finalize();
  void validate() const;

  nlohmann::json to_json() const;
};

/// Seed for a named stage, derived only from the global seed.
std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage);

RunConfig default_config();

/// Reads TOML text; `overrides` are "section.key=value" strings applied on top
/// (flag > file > default).
RunConfig parse_config(const std::string& toml_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides = {});

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct SynthesisSummary {
  std::size_t selected = 0;
  std::size_t outliers = 0;
  std::size_t failures = 0;
  double flip_back_rate = 0.0;
  double mean_flip_step = 0.0;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string status = "incomplete";
  std::string failed_stage;
  std::string error;
  std::vector<StageTiming> timings;
  std::vector<EpochStats> encoder_history;
  double encoder_test_acc = 0.0;
  std::optional<DistanceSummary> distances;
  std::optional<SynthesisSummary> synthesis;
  double decoder_min_singular_value = 0.0;
  std::vector<DetectorEpoch> detector_history;
  std::optional<MetricsReport> metrics;      // primary scorer
  std::vector<MetricsReport> comparisons;   // every scorer

  /// Everything except timings; must be identical across reruns.
  nlohmann::json metrics_section() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Checks that the fields needed to reproduce a run are present and typed.
void validate_manifest_json(const nlohmann::json& j);

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Pipeline stages in execution order.
const std::vector<std::string>& stage_names();

/// Runs one stage against the artifacts in cfg.output_dir, recording into the
/// manifest. Errors are rethrown as StageError.
void run_stage(const std::string& stage, const RunConfig& cfg, RunManifest& manifest);

/// Every stage in order; writes manifest.json (also on failure).
RunManifest run_all(const RunConfig& cfg);

struct SweepSpec {
  std::string parameter;  // alpha | c | r | beta | K
  std::vector<double> values;
  RunConfig base;

  void validate() const;
};

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string error;
  double fpr95_avg = 0.0;
  double auroc_avg = 0.0;
  double id_acc = 0.0;
  double mean_k = 0.0;
};

/// Applies one sweep value to a config copy.
RunConfig apply_sweep_value(const RunConfig& base, const std::string& parameter, double value);

/// One full run per value under <base output>/sweep_<param>/; writes
/// sweep_<param>.csv and sweep_<param>.svg next to them.
std::vector<SweepRow> sweep(const SweepSpec& spec);

enum class PlotKind { latent2d, score_hist, sweep_line };
PlotKind parse_plot_kind(const std::string& s);

/// Renders a plot from the artifacts of a finished run.
void plot_from_run(PlotKind kind, const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace bood

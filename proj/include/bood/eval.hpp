#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bood/data.hpp"
#include "bood/detector.hpp"

namespace bood {

/// Scores under the ID-positive convention: higher means more ID-like.
struct ScoreSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;

  void validate() const;
};

/// Threshold is the largest tau with frac(id >= tau) >= tpr_target; returns
/// frac(ood >= tau).
double fpr_at_tpr(const ScoreSet& scores, double tpr_target = 0.95);

/// Mann-Whitney statistic; ties count one half.
double auroc(const ScoreSet& scores);

/// Fraction of rows whose argmax logit equals the label.
double id_accuracy(const DetectorModel& model, const Dataset& labeled);
double accuracy_from_logits(const Matrix& logits, std::span<const std::size_t> labels);

enum class ScoreKind { detector, energy, msp };

ScoreKind parse_score_kind(const std::string& s);
std::string to_string(ScoreKind k);

double msp_score(const Vector& logits);

/// msp: max softmax probability; energy: -E(logits).
std::vector<double> baseline_scores(ScoreKind kind, const DetectorModel& model, const Matrix& inputs);

/// Any of the three scorers over a batch of inputs.
std::vector<double> score_inputs(ScoreKind kind, const DetectorModel& model, const Matrix& inputs);

struct SetMetrics {
  std::string name;
  double fpr95 = 0.0;
  double auroc = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

struct MetricsReport {
  std::string score;  // scorer used
  double tpr_target = 0.95;
  double id_acc = 0.0;
  std::size_t n_id = 0;
  std::vector<SetMetrics> sets;
  std::vector<std::string> absent;  // named sets that were empty
  std::optional<SetMetrics> average;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport&) const = default;
};

struct NamedSet {
  std::string name;
  Matrix inputs;
};

/// Per-set metrics plus the unweighted average of fpr95 and auroc. Empty OOD
/// sets are listed as absent and left out of the average.
MetricsReport evaluate_run(const DetectorModel& model, ScoreKind kind, const Dataset& id_test,
                           const std::vector<NamedSet>& ood_sets, double tpr_target = 0.95);

/// Same aggregation for precomputed scores.
MetricsReport evaluate_scores(const std::vector<double>& id_scores,
                              const std::vector<std::pair<std::string, std::vector<double>>>& ood_scores,
                              double tpr_target = 0.95);

bool operator==(const SetMetrics& a, const SetMetrics& b);

}  // namespace bood

#include "bood/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "bood/error.hpp"
#include "bood/latent.hpp"

namespace bood {

void ScoreSet::validate() const {
  if (id_scores.empty() || ood_scores.empty()) throw std::invalid_argument("score sets must be nonempty");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(id_scores.begin(), id_scores.end(), finite) ||
      !std::all_of(ood_scores.begin(), ood_scores.end(), finite)) {
    throw std::invalid_argument("scores must be finite");
  }
}

double fpr_at_tpr(const ScoreSet& scores, double tpr_target) {
  scores.validate();
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw std::invalid_argument("tpr target must be in (0, 1]");
  std::vector<double> id = scores.id_scores;
  std::sort(id.begin(), id.end(), std::greater<>());
  const double n_id = static_cast<double>(id.size());
  // Walk thresholds from the top; each tied group is admitted as a whole.
  double tau = id.back();
  for (std::size_t i = 0; i < id.size();) {
    std::size_t j = i;
    while (j < id.size() && id[j] == id[i]) ++j;
    if (static_cast<double>(j) / n_id >= tpr_target) {
      tau = id[i];
      break;
    }
    i = j;
  }
  std::vector<double> ood = scores.ood_scores;
  std::sort(ood.begin(), ood.end());
  const auto above = static_cast<double>(ood.end() - std::lower_bound(ood.begin(), ood.end(), tau));
  return above / static_cast<double>(ood.size());
}

double auroc(const ScoreSet& scores) {
  scores.validate();
  std::vector<double> ood = scores.ood_scores;
  std::sort(ood.begin(), ood.end());
  // Twice the pair statistic, kept integral so the result is exact.
  std::uint64_t twice = 0;
  for (double s : scores.id_scores) {
    const auto [lo, hi] = std::equal_range(ood.begin(), ood.end(), s);
    twice += 2 * static_cast<std::uint64_t>(lo - ood.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(scores.id_scores.size()) * static_cast<double>(ood.size());
  return static_cast<double>(twice) / (2.0 * pairs);
}

double accuracy_from_logits(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() == 0) throw std::invalid_argument("empty labeled set");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw DimensionError("label count mismatch");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (argmax(logits.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double id_accuracy(const DetectorModel& model, const Dataset& labeled) {
  return accuracy_from_logits(mlp_forward(model.backbone, labeled.rows), labeled.labels);
}

ScoreKind parse_score_kind(const std::string& s) {
  if (s == "detector") return ScoreKind::detector;
  if (s == "energy") return ScoreKind::energy;
  if (s == "msp") return ScoreKind::msp;
  throw ConfigError("unknown score kind '" + s + "'");
}

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::detector: return "detector";
    case ScoreKind::energy: return "energy";
    case ScoreKind::msp: return "msp";
  }
  return "?";
}

double msp_score(const Vector& logits) {
  const double m = logits.maxCoeff();
  return 1.0 / (logits.array() - m).exp().sum();
}

std::vector<double> baseline_scores(ScoreKind kind, const DetectorModel& model, const Matrix& inputs) {
  if (kind == ScoreKind::detector) throw std::invalid_argument("detector score is not a baseline");
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim()) {
    throw DimensionError("inputs have dim " + std::to_string(inputs.cols()) + ", model expects " +
                         std::to_string(model.input_dim()));
  }
  const Matrix logits = mlp_forward(model.backbone, inputs);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Vector l = logits.row(i).transpose();
    out.push_back(kind == ScoreKind::msp ? msp_score(l) : -energy(l));
  }
  return out;
}

std::vector<double> score_inputs(ScoreKind kind, const DetectorModel& model, const Matrix& inputs) {
  if (kind != ScoreKind::detector) return baseline_scores(kind, model, inputs);
  const Vector s = ood_scores(model, inputs);
  return {s.data(), s.data() + s.size()};
}

bool operator==(const SetMetrics& a, const SetMetrics& b) {
  return a.name == b.name && a.fpr95 == b.fpr95 && a.auroc == b.auroc && a.n_id == b.n_id && a.n_ood == b.n_ood;
}

namespace {

nlohmann::json set_to_json(const SetMetrics& s) {
  return {{"name", s.name}, {"fpr95", s.fpr95}, {"auroc", s.auroc}, {"n_id", s.n_id}, {"n_ood", s.n_ood}};
}

SetMetrics set_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.at("fpr95").get<double>(), j.at("auroc").get<double>(),
          j.at("n_id").get<std::size_t>(), j.at("n_ood").get<std::size_t>()};
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["score"] = score;
  j["tpr_target"] = tpr_target;
  j["id_acc"] = id_acc;
  j["n_id"] = n_id;
  auto arr = nlohmann::json::array();
  for (const auto& s : sets) arr.push_back(set_to_json(s));
  j["sets"] = arr;
  j["absent"] = absent;
  j["average"] = average ? set_to_json(*average) : nlohmann::json(nullptr);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.score = j.at("score").get<std::string>();
  r.tpr_target = j.at("tpr_target").get<double>();
  r.id_acc = j.at("id_acc").get<double>();
  r.n_id = j.at("n_id").get<std::size_t>();
  for (const auto& s : j.at("sets")) r.sets.push_back(set_from_json(s));
  r.absent = j.at("absent").get<std::vector<std::string>>();
  if (!j.at("average").is_null()) r.average = set_from_json(j.at("average"));
  return r;
}

MetricsReport evaluate_scores(const std::vector<double>& id_scores,
                              const std::vector<std::pair<std::string, std::vector<double>>>& ood_scores,
                              double tpr_target) {
  if (id_scores.empty()) throw std::invalid_argument("empty ID test set");
  MetricsReport r;
  r.tpr_target = tpr_target;
  r.n_id = id_scores.size();
  double fpr_sum = 0.0, auroc_sum = 0.0;
  std::size_t ood_total = 0;
  for (const auto& [name, scores] : ood_scores) {
    if (scores.empty()) {
      r.absent.push_back(name);
      continue;
    }
    const ScoreSet set{id_scores, scores};
    SetMetrics m{name, fpr_at_tpr(set, tpr_target), auroc(set), id_scores.size(), scores.size()};
    fpr_sum += m.fpr95;
    auroc_sum += m.auroc;
    ood_total += scores.size();
    r.sets.push_back(std::move(m));
  }
  if (!r.sets.empty()) {
    const double k = static_cast<double>(r.sets.size());
    r.average = SetMetrics{"average", fpr_sum / k, auroc_sum / k, id_scores.size(), ood_total};
  }
  return r;
}

MetricsReport evaluate_run(const DetectorModel& model, ScoreKind kind, const Dataset& id_test,
                           const std::vector<NamedSet>& ood_sets, double tpr_target) {
  if (id_test.size() == 0) throw std::invalid_argument("empty ID test set");
  const auto id_scores = score_inputs(kind, model, id_test.rows);
  std::vector<std::pair<std::string, std::vector<double>>> ood;
  for (const auto& s : ood_sets) {
    ood.emplace_back(s.name, s.inputs.rows() == 0 ? std::vector<double>{} : score_inputs(kind, model, s.inputs));
  }
  auto r = evaluate_scores(id_scores, ood, tpr_target);
  r.score = to_string(kind);
  r.id_acc = id_accuracy(model, id_test);
  return r;
}

}  // namespace bood

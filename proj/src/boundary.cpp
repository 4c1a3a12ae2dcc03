#include "bood/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bood/error.hpp"
#include "bood/parallel.hpp"

namespace bood {

void BoundaryConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("boundary alpha must be > 0");
  if (max_steps < 1) throw ConfigError("boundary K must be >= 1");
  if (!(select_percent > 0.0 && select_percent <= 100.0)) throw ConfigError("boundary r must be in (0, 100]");
}

Vector perturb_step(const FeatureClassifier& clf, const Vector& z, std::size_t y, double alpha) {
  Vector grad;
  clf.loss_and_grad(z, y, grad);
  Vector out = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (grad[i] > 0.0) {
      out[i] += alpha;
    } else if (grad[i] < 0.0) {
      out[i] -= alpha;
    }
  }
  return out;
}

DistanceEstimate estimate_distance(const FeatureClassifier& clf, const Vector& z, std::size_t y,
                                   const BoundaryConfig& cfg) {
  if (y >= clf.class_count()) throw std::out_of_range("label out of range");
  if (clf.predict(z) != y) return {0, z};
  Vector cur = z;
  for (std::size_t k = 1; k <= cfg.max_steps; ++k) {
    cur = perturb_step(clf, cur, y, cfg.alpha);
    if (clf.predict(cur) != y) return {k, std::move(cur)};
  }
  return {std::nullopt, std::move(cur)};
}

DistanceTable estimate_distances(const FeatureClassifier& clf, const std::vector<LatentFeature>& features,
                                 const BoundaryConfig& cfg, std::size_t threads) {
  cfg.validate();
  DistanceTable table(features.size());
  parallel_for(features.size(), threads, [&](std::size_t i) {
    const auto& f = features[i];
    auto est = estimate_distance(clf, f.z, f.label, cfg);
    table[i] = {f.source_index, f.label, est.steps, std::move(est.final_z)};
  });
  return table;
}

DistanceSummary summarize(const DistanceTable& table) {
  DistanceSummary s;
  s.total = table.size();
  double sum = 0.0;
  std::size_t crossed = 0;
  for (const auto& r : table) {
    if (!r.crossed()) {
      ++s.never_crossed;
      continue;
    }
    if (*r.steps == 0) ++s.already_misclassified;
    ++s.histogram[*r.steps];
    sum += static_cast<double>(*r.steps);
    ++crossed;
  }
  s.mean_steps = crossed ? sum / static_cast<double>(crossed) : 0.0;
  return s;
}

std::vector<DistanceRecord> select_boundary(const DistanceTable& table, double percent) {
  if (table.empty()) throw std::invalid_argument("empty distance table");
  if (!(percent > 0.0 && percent <= 100.0)) throw ConfigError("selection percent must be in (0, 100]");
  std::vector<DistanceRecord> crossed;
  for (const auto& r : table) {
    if (r.crossed()) crossed.push_back(r);
  }
  if (crossed.empty()) throw std::runtime_error("no boundary features: no feature crossed within K steps");
  std::stable_sort(crossed.begin(), crossed.end(), [](const DistanceRecord& a, const DistanceRecord& b) {
    return std::pair(*a.steps, a.source_index) < std::pair(*b.steps, b.source_index);
  });
  // The small slack keeps exact products such as 40% of 5 from rounding up.
  const double exact = percent * static_cast<double>(crossed.size()) / 100.0;
  auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  count = std::clamp<std::size_t>(count, 1, crossed.size());
  crossed.resize(count);
  return crossed;
}

void write_distance_csv(const DistanceTable& table, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "source_index,label,steps,crossed\n";
  for (const auto& r : table) {
    os << r.source_index << ',' << r.label << ',';
    if (r.crossed()) {
      os << *r.steps << ",1\n";
    } else {
      os << "-1,0\n";
    }
  }
  if (!os) throw IoError("write failed for " + path.string());
}

DistanceTable load_distance_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("source_index,label,steps,crossed", 0) != 0) {
    throw IoError(path.string() + ": missing distance table header");
  }
  DistanceTable table;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long idx = 0, label = 0, steps = 0, crossed = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> idx >> c1 >> label >> c2 >> steps >> c3 >> crossed) || c1 != ',' || c2 != ',' || c3 != ',' ||
        idx < 0 || label < 0) {
      throw IoError(path.string() + " line " + std::to_string(line_no) + ": malformed row");
    }
    DistanceRecord r;
    r.source_index = static_cast<std::size_t>(idx);
    r.label = static_cast<std::size_t>(label);
    if (crossed != 0) {
      if (steps < 0) throw IoError(path.string() + " line " + std::to_string(line_no) + ": negative steps");
      r.steps = static_cast<std::size_t>(steps);
    }
    table.push_back(std::move(r));
  }
  return table;
}

}  // namespace bood

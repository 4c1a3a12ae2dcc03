#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bood/nn.hpp"

namespace bood {

/// Distinct fill colors, one per class.
std::vector<std::string> class_palette(std::size_t n);

/// Principal-component projection to two dimensions.
struct Projection2d {
  Vector mean;
  Matrix basis;  // n x 2

  static Projection2d fit(const Matrix& rows);
  Matrix apply(const Matrix& rows) const;
  Eigen::Vector2d apply(const Vector& row) const;
};

struct Latent2dPlot {
  Matrix points;  // m x 2
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::vector<std::size_t> highlighted;  // row indices of selected boundary features
  std::vector<std::vector<Eigen::Vector2d>> trajectories;
  std::string title = "latent space";
};

void plot_latent2d(const Latent2dPlot& plot, const std::filesystem::path& path);

void plot_score_hist(const std::vector<double>& id_scores,
                     const std::vector<std::pair<std::string, std::vector<double>>>& ood_scores,
                     const std::filesystem::path& path, std::size_t bins = 30,
                     const std::string& title = "OOD scores");

struct SweepSeries {
  std::string name;
  std::vector<double> y;
};

void plot_sweep_line(const std::string& x_label, const std::vector<double>& x,
                     const std::vector<SweepSeries>& series, const std::filesystem::path& path);

}  // namespace bood

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bood/rng.hpp"

namespace bood {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Layer widths from input to output. Hidden layers use `activation`, the
/// output layer is linear.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;

  void validate() const;
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const MlpParams& other) const;
};

struct Mlp {
  MlpSpec spec;
  MlpParams params;
};

/// Fan-in/fan-out scaled uniform initialization, biases zero.
MlpParams init_params(const MlpSpec& spec, Rng& rng);
MlpParams zeros_like(const MlpParams& params);
void check_shapes(const MlpSpec& spec, const MlpParams& params);
void check_same_shape(const MlpParams& a, const MlpParams& b);

Matrix mlp_forward(const Mlp& mlp, const Matrix& x);

/// Layer inputs and pre-activations kept for backprop.
struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l
  std::vector<Matrix> pre;     // pre-activation of layer l
  Matrix output;
};

ForwardTrace mlp_forward_trace(const Mlp& mlp, const Matrix& x);

struct Backprop {
  MlpParams grads;
  Matrix input_grad;
};

/// Backpropagates dL/d(output) through the network.
Backprop mlp_backward(const Mlp& mlp, const ForwardTrace& trace, const Matrix& d_output);

/// Loss value and dL/d(output) for a batch of network outputs.
struct HeadResult {
  double loss = 0.0;
  Matrix d_output;
};

using LossHead = std::function<HeadResult(const Matrix& output)>;

struct GradResult {
  double loss = 0.0;
  MlpParams grads;
  Matrix input_grad;
};

/// Mean softmax cross-entropy over logits rows.
HeadResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

GradResult loss_and_grads(const Mlp& mlp, const Matrix& x, const LossHead& head);
GradResult loss_and_grads(const Mlp& mlp, const Matrix& x, std::span<const std::size_t> labels);

/// Cosine decay from lr_init at step 0 to lr_min at total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init, double lr_min);

MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double lr);
void sgd_step_inplace(MlpParams& params, const MlpParams& grads, double lr);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 160;
  double lr_init = 0.1;
  double lr_min = 0.0;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

/// Index batches for one epoch. The last partial batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, Rng& rng);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx);

// -- gradient checking ------------------------------------------------------

struct GradEntry {
  bool is_input = false;
  std::size_t layer = 0;  // parameter layer; unused for input entries
  bool is_bias = false;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradEntry> flagged;  // entries above tolerance
  bool ok() const { return flagged.empty(); }
};

/// Denominator floor for relative errors. Central differences at h = 1e-6
/// carry about ulp(loss) / h ~ 1e-10 of rounding noise, so entries whose true
/// gradient is (near) zero are compared on an absolute 1e-8 scale instead.
inline constexpr double kGradCheckFloor = 1e-4;

/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
double relative_error(double analytic, double numeric);

/// Central finite differences over every parameter and input entry.
GradResult numeric_gradients(const Mlp& mlp, const Matrix& x, const LossHead& head, double h = 1e-6);

GradCheckReport compare_gradients(const GradResult& analytic, const GradResult& numeric,
                                  double tolerance);

GradCheckReport finite_diff_check(const Mlp& mlp, const Matrix& x, const LossHead& head,
                                  double tolerance = 1e-4, double h = 1e-6);

// -- checkpoints ------------------------------------------------------------

/// Writes "BOODCKPT", version, layer count, widths, then per layer the
/// row-major weights followed by the biases, all little-endian.
void save_checkpoint(const Mlp& mlp, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path, Activation activation);

}  // namespace bood

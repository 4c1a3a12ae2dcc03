#include "bood/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bood/binary_io.hpp"
#include "bood/error.hpp"

namespace bood {

namespace {

constexpr char kCheckpointMagic[9] = "BOODCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void activate_inplace(Matrix& m, Activation a) {
  if (a == Activation::relu) {
    m = m.cwiseMax(0.0);
  } else {
    m = m.array().tanh().matrix();
  }
}

// d(act)/d(pre) multiplied into upstream gradient.
void activation_backward_inplace(Matrix& upstream, const Matrix& pre, Activation a) {
  if (a == Activation::relu) {
    upstream = (pre.array() > 0.0).select(upstream.array(), 0.0).matrix();
  } else {
    const auto t = pre.array().tanh();
    upstream = (upstream.array() * (1.0 - t * t)).matrix();
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MLP needs at least 2 layer widths");
  for (auto w : widths) {
    if (w < 1) throw ConfigError("MLP layer widths must be >= 1");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool MlpParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (a.bias.size() != b.bias.size()) return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto fan_in = spec.widths[l];
    const auto fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(static_cast<Eigen::Index>(fan_out))};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return z;
}

void check_shapes(const MlpSpec& spec, const MlpParams& params) {
  spec.validate();
  if (params.layers.size() != spec.layer_count()) {
    throw DimensionError("parameter layer count " + std::to_string(params.layers.size()) +
                         " does not match spec layer count " + std::to_string(spec.layer_count()));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const auto out = static_cast<Eigen::Index>(spec.widths[l + 1]);
    const auto in = static_cast<Eigen::Index>(spec.widths[l]);
    if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out) {
      throw DimensionError("layer " + std::to_string(l) + " has weight " +
                           shape_str(layer.weight.rows(), layer.weight.cols()) + ", expected " +
                           shape_str(out, in));
    }
  }
}

void check_same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) throw DimensionError("parameter sets differ in layer count");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight.rows() != b.layers[l].weight.rows() ||
        a.layers[l].weight.cols() != b.layers[l].weight.cols() ||
        a.layers[l].bias.size() != b.layers[l].bias.size()) {
      throw DimensionError("parameter sets differ in shape at layer " + std::to_string(l));
    }
  }
}

namespace {

void check_input(const Mlp& mlp, const Matrix& x) {
  if (x.cols() != static_cast<Eigen::Index>(mlp.spec.input_width())) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(mlp.spec.input_width()));
  }
}

}  // namespace

Matrix mlp_forward(const Mlp& mlp, const Matrix& x) {
  check_input(mlp, x);
  Matrix h = x;
  const auto n = mlp.params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = mlp.params.layers[l];
    Matrix next = h * layer.weight.transpose();
    next.rowwise() += layer.bias.transpose();
    if (l + 1 < n) activate_inplace(next, mlp.spec.activation);
    h = std::move(next);
  }
  return h;
}

ForwardTrace mlp_forward_trace(const Mlp& mlp, const Matrix& x) {
  check_input(mlp, x);
  ForwardTrace t;
  Matrix h = x;
  const auto n = mlp.params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = mlp.params.layers[l];
    Matrix pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    t.inputs.push_back(h);
    t.pre.push_back(pre);
    if (l + 1 < n) activate_inplace(pre, mlp.spec.activation);
    h = std::move(pre);
  }
  t.output = std::move(h);
  return t;
}

Backprop mlp_backward(const Mlp& mlp, const ForwardTrace& trace, const Matrix& d_output) {
  if (d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols()) {
    throw DimensionError("output gradient has shape " + shape_str(d_output.rows(), d_output.cols()) +
                         ", expected " + shape_str(trace.output.rows(), trace.output.cols()));
  }
  Backprop bp;
  bp.grads = zeros_like(mlp.params);
  Matrix upstream = d_output;
  for (std::size_t l = mlp.params.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.params.layers.size()) {
      activation_backward_inplace(upstream, trace.pre[l], mlp.spec.activation);
    }
    bp.grads.layers[l].weight = upstream.transpose() * trace.inputs[l];
    bp.grads.layers[l].bias = upstream.colwise().sum().transpose();
    upstream = upstream * mlp.params.layers[l].weight;
  }
  bp.input_grad = std::move(upstream);
  return bp;
}

HeadResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  const auto batch = logits.rows();
  if (batch == 0) throw std::invalid_argument("empty batch");
  if (static_cast<std::size_t>(batch) != labels.size()) {
    throw DimensionError("label count " + std::to_string(labels.size()) + " does not match batch " +
                         std::to_string(batch));
  }
  HeadResult r;
  r.d_output.resize(batch, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    if (y >= static_cast<std::size_t>(logits.cols())) {
      throw std::out_of_range("label " + std::to_string(y) + " out of range for " +
                              std::to_string(logits.cols()) + " classes");
    }
    const double m = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - m).exp();
    const double s = e.sum();
    total += std::log(s) + m - logits(i, static_cast<Eigen::Index>(y));
    r.d_output.row(i) = (e / s).matrix();
    r.d_output(i, static_cast<Eigen::Index>(y)) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(batch);
  r.loss = total * inv;
  r.d_output *= inv;
  return r;
}

GradResult loss_and_grads(const Mlp& mlp, const Matrix& x, const LossHead& head) {
  if (x.rows() == 0) throw std::invalid_argument("empty batch");
  const auto trace = mlp_forward_trace(mlp, x);
  auto h = head(trace.output);
  auto bp = mlp_backward(mlp, trace, h.d_output);
  return {h.loss, std::move(bp.grads), std::move(bp.input_grad)};
}

GradResult loss_and_grads(const Mlp& mlp, const Matrix& x, std::span<const std::size_t> labels) {
  return loss_and_grads(mlp, x, [labels](const Matrix& out) { return softmax_cross_entropy(out, labels); });
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init, double lr_min) {
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step_inplace(MlpParams& params, const MlpParams& grads, double lr) {
  check_same_shape(params, grads);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weight -= lr * grads.layers[l].weight;
    params.layers[l].bias -= lr * grads.layers[l].bias;
  }
}

MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double lr) {
  MlpParams out = params;
  sgd_step_inplace(out, grads, lr);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_min >= 0.0) || !(lr_init >= lr_min)) throw ConfigError("need lr_init >= lr_min >= 0");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

// -- gradient checking ------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradResult numeric_gradients(const Mlp& mlp, const Matrix& x, const LossHead& head, double h) {
  auto eval = [&head](const Mlp& m, const Matrix& in) { return head(mlp_forward(m, in)).loss; };
  GradResult g;
  g.loss = eval(mlp, x);
  g.grads = zeros_like(mlp.params);
  Mlp probe = mlp;
  for (std::size_t l = 0; l < probe.params.layers.size(); ++l) {
    auto& w = probe.params.layers[l].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = eval(probe, x);
      w.data()[i] = orig - h;
      const double down = eval(probe, x);
      w.data()[i] = orig;
      g.grads.layers[l].weight.data()[i] = (up - down) / (2.0 * h);
    }
    auto& b = probe.params.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double orig = b[i];
      b[i] = orig + h;
      const double up = eval(probe, x);
      b[i] = orig - h;
      const double down = eval(probe, x);
      b[i] = orig;
      g.grads.layers[l].bias[i] = (up - down) / (2.0 * h);
    }
  }
  Matrix xp = x;
  g.input_grad = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < xp.size(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + h;
    const double up = eval(mlp, xp);
    xp.data()[i] = orig - h;
    const double down = eval(mlp, xp);
    xp.data()[i] = orig;
    g.input_grad.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

GradCheckReport compare_gradients(const GradResult& analytic, const GradResult& numeric,
                                  double tolerance) {
  check_same_shape(analytic.grads, numeric.grads);
  if (analytic.input_grad.rows() != numeric.input_grad.rows() ||
      analytic.input_grad.cols() != numeric.input_grad.cols()) {
    throw DimensionError("input gradient shapes differ");
  }
  GradCheckReport rep;
  auto visit = [&](GradEntry e) {
    e.rel_error = relative_error(e.analytic, e.numeric);
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    ++rep.checked;
    if (e.rel_error > tolerance) rep.flagged.push_back(e);
  };
  for (std::size_t l = 0; l < analytic.grads.layers.size(); ++l) {
    const auto& wa = analytic.grads.layers[l].weight;
    const auto& wn = numeric.grads.layers[l].weight;
    for (Eigen::Index r = 0; r < wa.rows(); ++r) {
      for (Eigen::Index c = 0; c < wa.cols(); ++c) {
        visit({false, l, false, static_cast<std::size_t>(r), static_cast<std::size_t>(c), wa(r, c),
               wn(r, c), 0.0});
      }
    }
    const auto& ba = analytic.grads.layers[l].bias;
    const auto& bn = numeric.grads.layers[l].bias;
    for (Eigen::Index r = 0; r < ba.size(); ++r) {
      visit({false, l, true, static_cast<std::size_t>(r), 0, ba[r], bn[r], 0.0});
    }
  }
  for (Eigen::Index r = 0; r < analytic.input_grad.rows(); ++r) {
    for (Eigen::Index c = 0; c < analytic.input_grad.cols(); ++c) {
      visit({true, 0, false, static_cast<std::size_t>(r), static_cast<std::size_t>(c),
             analytic.input_grad(r, c), numeric.input_grad(r, c), 0.0});
    }
  }
  return rep;
}

GradCheckReport finite_diff_check(const Mlp& mlp, const Matrix& x, const LossHead& head,
                                  double tolerance, double h) {
  return compare_gradients(loss_and_grads(mlp, x, head), numeric_gradients(mlp, x, head, h),
                           tolerance);
}

// -- checkpoints ------------------------------------------------------------

void save_checkpoint(const Mlp& mlp, const std::filesystem::path& path) {
  check_shapes(mlp.spec, mlp.params);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_magic(os, kCheckpointMagic);
  binio::write_le<std::uint32_t>(os, kCheckpointVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(mlp.spec.layer_count()));
  for (auto w : mlp.spec.widths) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  for (const auto& layer : mlp.params.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) binio::write_le(os, layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) binio::write_le(os, layer.bias[i]);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path, Activation activation) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binio::expect_magic(is, kCheckpointMagic);
  const auto version = binio::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto layers = binio::read_le<std::uint32_t>(is);
  if (layers < 1 || layers > 1024) throw IoError("implausible layer count in " + path.string());
  Mlp mlp;
  mlp.spec.activation = activation;
  for (std::uint32_t i = 0; i <= layers; ++i) mlp.spec.widths.push_back(binio::read_le<std::uint32_t>(is));
  mlp.spec.validate();
  for (std::size_t l = 0; l < layers; ++l) {
    Layer layer{Matrix(mlp.spec.widths[l + 1], mlp.spec.widths[l]),
                Vector(static_cast<Eigen::Index>(mlp.spec.widths[l + 1]))};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = binio::read_le<double>(is);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = binio::read_le<double>(is);
    mlp.params.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace bood

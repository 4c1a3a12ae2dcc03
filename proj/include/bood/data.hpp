#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bood/nn.hpp"

namespace bood {

enum class DatasetKind { gaussian_mixture, two_rings, from_csv };
enum class Split { train, id_test, ood_test };
enum class ShiftKind { held_out_classes, radial_shift, uniform_box };

DatasetKind parse_dataset_kind(const std::string& s);
std::string to_string(DatasetKind k);
ShiftKind parse_shift_kind(const std::string& s);
std::string to_string(ShiftKind k);
std::string to_string(Split s);

struct Dataset {
  Matrix rows;                      // m x D
  std::vector<std::size_t> labels;  // m
  std::size_t class_count = 0;
  std::vector<std::string> class_names;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
  void validate() const;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_mixture;
  std::size_t classes = 8;
  std::size_t input_dim = 16;
  std::size_t latent_dim = 2;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 200;
  double center_scale = 3.0;
  double noise_sigma = 0.2;
  bool mix = true;
  std::uint64_t seed = 7;
  std::string csv_train;  // from_csv only
  std::string csv_test;   // from_csv only, optional

  void validate() const;
};

/// Everything needed to regenerate or decode the synthetic data.
struct GeneratorRecord {
  std::uint64_t seed = 0;
  Matrix latent_centers;  // V x L
  Matrix centers;         // V x D, in input space
  Matrix mixing;          // D x L
  double noise_sigma = 0.0;
  std::map<std::string, double> margins;
  std::map<std::string, Matrix> ood_centers;

  nlohmann::json to_json() const;
  static GeneratorRecord from_json(const nlohmann::json& j);
};

struct GeneratedData {
  Dataset train;
  Dataset id_test;
  GeneratorRecord record;
};

GeneratedData gen_gaussian_mixture(const DatasetSpec& spec);
GeneratedData gen_two_rings(const DatasetSpec& spec);
/// Dispatches on spec.kind; from_csv loads the files named in the spec.
GeneratedData generate_dataset(const DatasetSpec& spec);

struct OodSpec {
  ShiftKind kind = ShiftKind::held_out_classes;
  std::size_t count = 1600;
  double radial_factor = 2.0;
  double box_inflation = 1.5;
  std::uint64_t seed = 0;
};

/// OOD test samples whose support is disjoint from the ID classes by
/// construction. Margins and extra centers are recorded into `record`.
Dataset gen_ood_testset(const DatasetSpec& spec, const GeneratedData& id, const OodSpec& ood,
                        GeneratorRecord& record);

/// Default separation required between held-out and ID centers, in units of
/// noise_sigma.
inline constexpr double kHeldOutMarginSigmas = 5.0;

// -- toy decoder ------------------------------------------------------------

/// Linear map from latent features back to the input space: x = W z + b.
struct ToyDecoder {
  Matrix weight;  // D x n
  Vector bias;    // D

  std::size_t latent_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(weight.rows()); }
  double min_singular_value() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ToyDecoder from_json(const nlohmann::json& j);
};

/// Least-squares fit of inputs (m x D) on latent features (m x n) with bias.
ToyDecoder fit_toy_decoder(const Matrix& latent, const Matrix& inputs);

Vector toy_decode(const ToyDecoder& decoder, const Vector& z);
Matrix toy_decode(const ToyDecoder& decoder, const Matrix& z_rows);

// -- files ------------------------------------------------------------------

void write_dataset_csv(const Dataset& d, const std::filesystem::path& path);

/// Loads "label,v1,v2,..." rows. Labels are mapped to dense indices in
/// first-appearance order, extending `known_classes` when given.
Dataset load_embeddings_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& known_classes = {});

/// One record of the binary outlier feature file.
struct FeatureRecord {
  std::uint64_t origin_index = 0;
  std::uint32_t origin_label = 0;
  std::uint32_t flip_step = 0;
  Vector z;
};

std::vector<FeatureRecord> load_features_bin(const std::filesystem::path& path);

}  // namespace bood

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <string>
#include <string_view>

#include "fusion/fixed_point.hpp"

namespace fusion {

using Label = std::int64_t;

enum class ActivationKind { ReLU, Square };
enum class Classifier { Argmax, Softmax };

struct DenseLayer {
  std::size_t rows = 0;  // output dimension
  std::size_t cols = 0;  // input dimension
  std::vector<std::int64_t> weights;  // row-major, rows * cols, scale 2^f
  std::vector<std::int64_t> bias;     // rows, scale 2^f
};

struct ActivationLayer {
  ActivationKind kind = ActivationKind::ReLU;
};

using Layer = std::variant<DenseLayer, ActivationLayer>;

/// Reverse-sigmoid perturbation parameters (model-extraction defense on output probabilities).
struct DefenseParams {
  double beta = 0.0;   // magnitude, >= 0
  double gamma = 1.0;  // convergence parameter, > 0
  double clamp_eps = 1e-6;

  void validate() const;
};

/// Fixed-point feed-forward network. Immutable once constructed; forward() is reentrant.
class Model {
 public:
  Model(std::vector<Layer> layers, int scale_bits, Classifier classifier = Classifier::Argmax,
        std::optional<DefenseParams> defense = std::nullopt);

  /// Model file format: {"scale_bits", "classifier", "defense", "layers": [...]}; reals are
  /// converted to fixed point at load and rejected when they overflow the ring.
  static Model from_json(std::string_view text);
  static Model load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  int scale_bits() const noexcept { return scale_bits_; }
  Classifier classifier() const noexcept { return classifier_; }
  const std::optional<DefenseParams>& defense() const noexcept { return defense_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

 private:
  std::vector<Layer> layers_;
  int scale_bits_;
  Classifier classifier_;
  std::optional<DefenseParams> defense_;
  std::size_t input_dim_ = 0;
  std::size_t num_classes_ = 0;
};

struct Prediction {
  Label label = 0;
  std::vector<std::int64_t> logits;          // fixed point, scale 2^f
  std::optional<std::vector<double>> probs;  // softmax classifier only (defended when configured)
};

/// W x >> f + b with exact 128-bit accumulation. Throws OverflowError naming `layer_index`
/// when the pre-truncation accumulator or the output leaves the signed 64-bit range.
std::vector<std::int64_t> dense_forward(const DenseLayer& layer, std::span<const std::int64_t> x,
                                        int scale_bits, std::size_t layer_index);

/// Elementwise activation. Square is (z*z) >> f with the same overflow rule.
std::int64_t activate(ActivationKind kind, std::int64_t z, int scale_bits, std::size_t layer_index);

/// Index of the largest logit; ties go to the lowest index.
Label argmax(std::span<const std::int64_t> logits);

Prediction forward(const Model& model, std::span<const std::int64_t> x);

std::vector<double> softmax(std::span<const std::int64_t> logits, int scale_bits);

/// Reverse-sigmoid defense: y_hat_j = alpha * (y_j - beta * (s(gamma * logit(y_j)) - 1/2)),
/// with y_j clamped into [eps, 1 - eps] inside the logit and alpha normalizing the sum to 1.
std::vector<double> reverse_sigmoid_defense(std::span<const double> y, const DefenseParams& d);

/// Un-normalized perturbed vector y_j - r(y_j); exposed for the binary antisymmetry property.
std::vector<double> reverse_sigmoid_perturbed(std::span<const double> y, const DefenseParams& d);

}  // namespace fusion

#include "fusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fusion {
namespace {

using nlohmann::json;

std::string layer_tag(std::size_t index) { return "layer " + std::to_string(index); }

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::vector<std::int64_t> encode_all(const json& values, int scale_bits, std::size_t expected,
                                     const std::string& what) {
  if (!values.is_array() || values.size() != expected) {
    throw FormatError(what + ": expected " + std::to_string(expected) + " values");
  }
  std::vector<std::int64_t> out;
  out.reserve(expected);
  for (const auto& v : values) {
    if (!v.is_number()) throw FormatError(what + ": non-numeric entry");
    try {
      out.push_back(to_fixed(v.get<double>(), scale_bits));
    } catch (const OverflowError& e) {
      throw FormatError(what + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void DefenseParams::validate() const {
  if (!(beta >= 0.0)) throw DomainError("defense beta must be >= 0");
  if (!(gamma > 0.0)) throw DomainError("defense gamma must be > 0");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw DomainError("defense clamp_eps must lie in (0, 0.5)");
}

Model::Model(std::vector<Layer> layers, int scale_bits, Classifier classifier,
             std::optional<DefenseParams> defense)
    : layers_(std::move(layers)),
      scale_bits_(scale_bits),
      classifier_(classifier),
      defense_(std::move(defense)) {
  if (scale_bits_ < 0 || scale_bits_ > 30) throw DomainError("scale_bits must lie in [0, 30]");
  if (defense_) defense_->validate();
  std::optional<std::size_t> dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (const auto* d = std::get_if<DenseLayer>(&layers_[l])) {
      if (d->rows == 0 || d->cols == 0) throw DomainError(layer_tag(l) + ": empty dense layer");
      if (d->weights.size() != d->rows * d->cols || d->bias.size() != d->rows) {
        throw DomainError(layer_tag(l) + ": weight/bias sizes do not match rows x cols");
      }
      if (dim && *dim != d->cols) {
        throw DomainError(layer_tag(l) + ": input dimension " + std::to_string(d->cols) +
                          " does not match previous output " + std::to_string(*dim));
      }
      if (!dim) input_dim_ = d->cols;
      dim = d->rows;
    }
  }
  if (!dim) throw DomainError("model needs at least one dense layer");
  num_classes_ = *dim;
}

Model Model::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("model JSON: top level must be an object");
  const int f = j.value("scale_bits", kDefaultScaleBits);

  Classifier classifier = Classifier::Argmax;
  const std::string cls = j.value("classifier", std::string("argmax"));
  if (cls == "softmax") {
    classifier = Classifier::Softmax;
  } else if (cls != "argmax") {
    throw FormatError("model JSON: classifier must be \"argmax\" or \"softmax\"");
  }

  std::optional<DefenseParams> defense;
  if (j.contains("defense") && !j["defense"].is_null()) {
    const auto& d = j["defense"];
    DefenseParams p;
    p.beta = d.at("beta").get<double>();
    p.gamma = d.at("gamma").get<double>();
    p.clamp_eps = d.value("clamp_eps", p.clamp_eps);
    defense = p;
  }

  if (!j.contains("layers") || !j["layers"].is_array()) throw FormatError("model JSON: missing layers");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < j["layers"].size(); ++l) {
    const auto& lj = j["layers"][l];
    const std::string type = lj.value("type", std::string());
    if (type == "dense") {
      DenseLayer d;
      d.rows = lj.at("rows").get<std::size_t>();
      d.cols = lj.at("cols").get<std::size_t>();
      d.weights = encode_all(lj.at("weights"), f, d.rows * d.cols, layer_tag(l) + " weights");
      d.bias = encode_all(lj.at("bias"), f, d.rows, layer_tag(l) + " bias");
      layers.emplace_back(std::move(d));
    } else if (type == "activation") {
      const std::string kind = lj.value("kind", std::string());
      if (kind == "relu") {
        layers.emplace_back(ActivationLayer{ActivationKind::ReLU});
      } else if (kind == "square") {
        layers.emplace_back(ActivationLayer{ActivationKind::Square});
      } else {
        throw FormatError(layer_tag(l) + ": activation kind must be \"relu\" or \"square\"");
      }
    } else {
      throw FormatError(layer_tag(l) + ": unknown layer type \"" + type + "\"");
    }
  }
  try {
    return Model(std::move(layers), f, classifier, defense);
  } catch (const DomainError& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Model::to_json() const {
  json j;
  j["scale_bits"] = scale_bits_;
  j["classifier"] = classifier_ == Classifier::Softmax ? "softmax" : "argmax";
  if (defense_) {
    j["defense"] = {{"beta", defense_->beta}, {"gamma", defense_->gamma}, {"clamp_eps", defense_->clamp_eps}};
  } else {
    j["defense"] = nullptr;
  }
  j["layers"] = json::array();
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      json w = json::array(), b = json::array();
      for (auto v : d->weights) w.push_back(to_real(v, scale_bits_));
      for (auto v : d->bias) b.push_back(to_real(v, scale_bits_));
      j["layers"].push_back({{"type", "dense"}, {"rows", d->rows}, {"cols", d->cols}, {"weights", w}, {"bias", b}});
    } else {
      const auto& a = std::get<ActivationLayer>(layer);
      j["layers"].push_back({{"type", "activation"}, {"kind", a.kind == ActivationKind::ReLU ? "relu" : "square"}});
    }
  }
  return j.dump();
}

std::vector<std::int64_t> dense_forward(const DenseLayer& layer, std::span<const std::int64_t> x,
                                        int scale_bits, std::size_t layer_index) {
  if (x.size() != layer.cols) {
    throw DomainError(layer_tag(layer_index) + ": expected input of dimension " +
                      std::to_string(layer.cols) + ", got " + std::to_string(x.size()));
  }
  std::vector<std::int64_t> out(layer.rows);
  for (std::size_t r = 0; r < layer.rows; ++r) {
    Wide acc = 0;
    const std::int64_t* row = layer.weights.data() + r * layer.cols;
    for (std::size_t c = 0; c < layer.cols; ++c) acc += static_cast<Wide>(row[c]) * x[c];
    if (!fits_int64(acc)) {
      throw OverflowError(layer_tag(layer_index) + ": fixed-point accumulator overflows 64 bits");
    }
    const Wide y = truncate(acc, scale_bits) + layer.bias[r];
    if (!fits_int64(y)) throw OverflowError(layer_tag(layer_index) + ": output overflows 64 bits");
    out[r] = static_cast<std::int64_t>(y);
  }
  return out;
}

std::int64_t activate(ActivationKind kind, std::int64_t z, int scale_bits, std::size_t layer_index) {
  switch (kind) {
    case ActivationKind::ReLU:
      return z > 0 ? z : 0;
    case ActivationKind::Square: {
      const Wide sq = static_cast<Wide>(z) * z;
      if (!fits_int64(sq)) throw OverflowError(layer_tag(layer_index) + ": square overflows 64 bits");
      return static_cast<std::int64_t>(truncate(sq, scale_bits));
    }
  }
  return z;
}

Label argmax(std::span<const std::int64_t> logits) {
  if (logits.empty()) throw DomainError("argmax of an empty vector");
  return static_cast<Label>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Prediction forward(const Model& model, std::span<const std::int64_t> x) {
  if (x.size() != model.input_dim()) {
    throw DomainError("sample dimension " + std::to_string(x.size()) + " does not match model input " +
                      std::to_string(model.input_dim()));
  }
  std::vector<std::int64_t> v(x.begin(), x.end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (const auto* d = std::get_if<DenseLayer>(&layers[l])) {
      v = dense_forward(*d, v, model.scale_bits(), l);
    } else {
      const auto kind = std::get<ActivationLayer>(layers[l]).kind;
      for (auto& z : v) z = activate(kind, z, model.scale_bits(), l);
    }
  }
  Prediction p;
  p.logits = std::move(v);
  if (model.classifier() == Classifier::Softmax) {
    auto probs = softmax(p.logits, model.scale_bits());
    if (model.defense()) probs = reverse_sigmoid_defense(probs, *model.defense());
    p.label = static_cast<Label>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    p.probs = std::move(probs);
  } else {
    p.label = argmax(p.logits);
  }
  return p;
}

std::vector<double> softmax(std::span<const std::int64_t> logits, int scale_bits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  std::vector<double> out(logits.size());
  const double top = to_real(*std::max_element(logits.begin(), logits.end()), scale_bits);
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(to_real(logits[j], scale_bits) - top);
    sum += out[j];
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> reverse_sigmoid_perturbed(std::span<const double> y, const DefenseParams& d) {
  d.validate();
  if (y.empty()) throw DomainError("defense: empty probability vector");
  double total = 0.0;
  for (double v : y) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("defense: probability outside [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("defense: probabilities must sum to 1");

  std::vector<double> out(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double c = std::clamp(y[j], d.clamp_eps, 1.0 - d.clamp_eps);
    const double inv = std::log(c / (1.0 - c));
    const double r = d.beta * (logistic(d.gamma * inv) - 0.5);
    out[j] = y[j] - r;
  }
  return out;
}

std::vector<double> reverse_sigmoid_defense(std::span<const double> y, const DefenseParams& d) {
  if (d.beta == 0.0) {
    reverse_sigmoid_perturbed(y, d);  // same input validation
    return {y.begin(), y.end()};
  }
  auto out = reverse_sigmoid_perturbed(y, d);
  double mass = 0.0;
  for (double v : out) {
    if (v < 0.0) {
      throw DomainError("defense: perturbed probability is negative; use a smaller beta");
    }
    mass += v;
  }
  if (!(mass > 0.0)) throw DomainError("defense: perturbed mass is not positive; use a smaller beta");
  for (auto& v : out) v /= mass;
  return out;
}

}  // namespace fusion

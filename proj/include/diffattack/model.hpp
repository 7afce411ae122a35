#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "diffattack/error.hpp"
#include "diffattack/tensor.hpp"
#include "json.hpp"

namespace diffattack {

enum class TaskKind { kClassification, kRegression };

inline const char* to_string(TaskKind t) {
  return t == TaskKind::kClassification ? "classification" : "regression";
}

enum class LayerKind { kDense, kRelu, kSoftmax };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  // Dense only. weights is row-major, outputs x inputs.
  std::size_t outputs = 0;
  std::size_t inputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static LayerSpec dense(std::vector<std::vector<double>> rows, std::vector<double> bias) {
    LayerSpec l;
    l.kind = LayerKind::kDense;
    l.outputs = rows.size();
    l.inputs = rows.empty() ? 0 : rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != l.inputs) {
        throw ShapeError("dense weight row " + std::to_string(r) + " has " +
                         std::to_string(rows[r].size()) + " columns, expected " +
                         std::to_string(l.inputs));
      }
      l.weights.insert(l.weights.end(), rows[r].begin(), rows[r].end());
    }
    l.bias = std::move(bias);
    if (l.bias.size() != l.outputs) {
      throw ShapeError("dense layer has " + std::to_string(l.outputs) + " weight rows but " +
                       std::to_string(l.bias.size()) + " biases");
    }
    return l;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::kRelu, 0, 0, {}, {}}; }
  static LayerSpec softmax() { return LayerSpec{LayerKind::kSoftmax, 0, 0, {}, {}}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Numerically stable softmax (max subtraction).
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

// Runs x / normalizer through the layer stack.
inline std::vector<double> forward(std::span<const LayerSpec> layers, std::span<const double> x,
                                   double normalizer) {
  if (!(normalizer > 0.0)) throw ValueError("normalizer must be positive");
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] / normalizer;

  std::vector<double> next;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& layer = layers[li];
    switch (layer.kind) {
      case LayerKind::kDense: {
        if (layer.inputs != v.size() || layer.weights.size() != layer.outputs * layer.inputs ||
            layer.bias.size() != layer.outputs) {
          throw ShapeError("layer " + std::to_string(li) + ": dense expects " +
                           std::to_string(layer.inputs) + " inputs, got " +
                           std::to_string(v.size()));
        }
        next.assign(layer.outputs, 0.0);
        for (std::size_t r = 0; r < layer.outputs; ++r) {
          const double* row = layer.weights.data() + r * layer.inputs;
          double acc = 0.0;
          for (std::size_t c = 0; c < layer.inputs; ++c) acc += row[c] * v[c];
          next[r] = acc + layer.bias[r];
        }
        v.swap(next);
        break;
      }
      case LayerKind::kRelu:
        for (double& e : v) e = std::max(0.0, e);
        break;
      case LayerKind::kSoftmax:
        v = softmax(v);
        break;
    }
  }
  return v;
}

// A locally evaluated feed-forward network, as stored in a model weight file.
struct Model {
  std::string id;
  TaskKind task = TaskKind::kClassification;
  Shape input_shape;
  double normalizer = 255.0;
  std::vector<LayerSpec> layers;

  std::size_t output_width() const {
    std::size_t width = input_shape.element_count();
    for (const auto& l : layers) {
      if (l.kind == LayerKind::kDense) width = l.outputs;
    }
    return width;
  }

  // Throws ProtocolError when the stack is inconsistent.
  void validate() const {
    if (id.empty()) throw ProtocolError("model id must not be empty");
    if (!(normalizer > 0.0)) throw ProtocolError("model '" + id + "': normalizer must be > 0");
    std::size_t width = input_shape.element_count();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& l = layers[li];
      if (l.kind != LayerKind::kDense) continue;
      if (l.inputs != width || l.weights.size() != l.outputs * l.inputs ||
          l.bias.size() != l.outputs || l.outputs == 0) {
        throw ProtocolError("model '" + id + "': layer " + std::to_string(li) +
                            " expects " + std::to_string(l.inputs) + " inputs, previous width is " +
                            std::to_string(width));
      }
      width = l.outputs;
    }
    const bool ends_softmax = !layers.empty() && layers.back().kind == LayerKind::kSoftmax;
    if (task == TaskKind::kClassification && !ends_softmax) {
      throw ProtocolError("model '" + id + "': classification models must end in softmax");
    }
    if (task == TaskKind::kRegression) {
      for (const auto& l : layers) {
        if (l.kind == LayerKind::kSoftmax) {
          throw ProtocolError("model '" + id + "': regression models must not use softmax");
        }
      }
    }
  }

  std::vector<double> run(std::span<const double> raw_input) const {
    return forward(layers, raw_input, normalizer);
  }
};

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) {
    switch (l.kind) {
      case LayerKind::kDense: {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < l.outputs; ++r) {
          rows.push_back(std::vector<double>(l.weights.begin() + r * l.inputs,
                                             l.weights.begin() + (r + 1) * l.inputs));
        }
        layers.push_back({{"kind", "dense"}, {"weights", rows}, {"bias", l.bias}});
        break;
      }
      case LayerKind::kRelu:
        layers.push_back({{"kind", "relu"}});
        break;
      case LayerKind::kSoftmax:
        layers.push_back({{"kind", "softmax"}});
        break;
    }
  }
  return {{"id", m.id},
          {"task", to_string(m.task)},
          {"input_shape", m.input_shape.dims()},
          {"normalizer", m.normalizer},
          {"layers", layers}};
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    Model m;
    m.id = j.at("id").get<std::string>();
    const auto task = j.at("task").get<std::string>();
    if (task == "classification") {
      m.task = TaskKind::kClassification;
    } else if (task == "regression") {
      m.task = TaskKind::kRegression;
    } else {
      throw ProtocolError("unknown task '" + task + "'");
    }
    m.input_shape = Shape(j.at("input_shape").get<std::vector<std::size_t>>());
    m.normalizer = j.value("normalizer", 255.0);
    for (const auto& jl : j.at("layers")) {
      const auto kind = jl.at("kind").get<std::string>();
      if (kind == "dense") {
        m.layers.push_back(LayerSpec::dense(jl.at("weights").get<std::vector<std::vector<double>>>(),
                                            jl.at("bias").get<std::vector<double>>()));
      } else if (kind == "relu") {
        m.layers.push_back(LayerSpec::relu());
      } else if (kind == "softmax") {
        m.layers.push_back(LayerSpec::softmax());
      } else {
        throw ProtocolError("unknown layer kind '" + kind + "'");
      }
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed model document: ") + e.what());
  } catch (const ShapeError& e) {
    throw ProtocolError(std::string("malformed model document: ") + e.what());
  }
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << model_to_json(m).dump(1) << '\n';
}

}  // namespace diffattack

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffattack/error.hpp"
#include "diffattack/model.hpp"
#include "diffattack/tensor.hpp"

namespace diffattack {

enum class AccessLevel { kFullDistribution, kTop1, kLabelOnly };

inline const char* to_string(AccessLevel a) {
  switch (a) {
    case AccessLevel::kFullDistribution: return "full";
    case AccessLevel::kTop1: return "top1";
    case AccessLevel::kLabelOnly: return "label";
  }
  return "?";
}

// What an oracle reveals for one input. Classification answers carry a label
// and, depending on the access level, its probability and the full
// distribution. Regression answers carry a scalar.
struct Prediction {
  TaskKind task = TaskKind::kClassification;
  int top_label = 0;
  std::optional<double> top_prob;
  std::optional<std::vector<double>> distribution;
  std::optional<double> value;

  static Prediction from_distribution(std::vector<double> dist) {
    if (dist.empty()) throw ProtocolError("empty probability distribution");
    Prediction p;
    p.task = TaskKind::kClassification;
    const auto it = std::max_element(dist.begin(), dist.end());
    p.top_label = static_cast<int>(it - dist.begin());
    p.top_prob = *it;
    p.distribution = std::move(dist);
    return p;
  }

  static Prediction regression(double v) {
    Prediction p;
    p.task = TaskKind::kRegression;
    p.value = v;
    return p;
  }

  // Probability assigned to `label`, when observable.
  std::optional<double> probability_of(int label) const {
    if (distribution) {
      if (label < 0 || static_cast<std::size_t>(label) >= distribution->size()) return 0.0;
      return (*distribution)[static_cast<std::size_t>(label)];
    }
    if (top_prob && label == top_label) return top_prob;
    return std::nullopt;
  }

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Drops whatever the access level does not expose. Never changes top_label.
inline Prediction truncate(Prediction p, AccessLevel level) {
  if (p.task == TaskKind::kRegression) return p;
  switch (level) {
    case AccessLevel::kFullDistribution:
      break;
    case AccessLevel::kTop1:
      p.distribution.reset();
      break;
    case AccessLevel::kLabelOnly:
      p.distribution.reset();
      p.top_prob.reset();
      break;
  }
  return p;
}

// Checks the structural invariants of a prediction; throws ProtocolError.
inline void validate(const Prediction& p) {
  if (p.task == TaskKind::kRegression) {
    if (!p.value || !std::isfinite(*p.value)) throw ProtocolError("regression answer without finite value");
    return;
  }
  if (p.top_label < 0) throw ProtocolError("negative top_label");
  if (p.top_prob && !(*p.top_prob >= 0.0 && *p.top_prob <= 1.0)) {
    throw ProtocolError("top_prob outside [0,1]");
  }
  if (p.distribution) {
    const auto& d = *p.distribution;
    if (d.empty()) throw ProtocolError("empty distribution");
    double sum = 0.0;
    for (double v : d) {
      if (!(v >= 0.0 && v <= 1.0)) throw ProtocolError("distribution entry outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ProtocolError("distribution does not sum to 1");
    const auto it = std::max_element(d.begin(), d.end());
    if (static_cast<int>(it - d.begin()) != p.top_label) {
      throw ProtocolError("top_label is not the distribution argmax");
    }
    if (p.top_prob && std::abs(*p.top_prob - *it) > 1e-9) {
      throw ProtocolError("top_prob differs from the distribution maximum");
    }
  }
}

inline nlohmann::json prediction_to_json(const Prediction& p) {
  nlohmann::json j = {{"task", to_string(p.task)}, {"top_label", p.top_label}};
  if (p.top_prob) j["top_prob"] = *p.top_prob;
  if (p.distribution) j["distribution"] = *p.distribution;
  if (p.value) j["value"] = *p.value;
  return j;
}

inline Prediction prediction_from_json(const nlohmann::json& j) {
  try {
    Prediction p;
    const auto task = j.at("task").get<std::string>();
    if (task == "classification") {
      p.task = TaskKind::kClassification;
    } else if (task == "regression") {
      p.task = TaskKind::kRegression;
    } else {
      throw ProtocolError("unknown task '" + task + "'");
    }
    p.top_label = j.value("top_label", 0);
    if (j.contains("top_prob") && !j["top_prob"].is_null()) p.top_prob = j["top_prob"].get<double>();
    if (j.contains("distribution") && !j["distribution"].is_null()) {
      p.distribution = j["distribution"].get<std::vector<double>>();
    }
    if (j.contains("value") && !j["value"].is_null()) p.value = j["value"].get<double>();
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed prediction payload: ") + e.what());
  }
}

// An opaque query target. Every call to query() costs exactly one query.
// Not thread-safe: confine an instance to one task, or clone() it.
class Oracle {
 public:
  Oracle(std::string id, TaskKind task, AccessLevel access, Shape input_shape)
      : id_(std::move(id)), task_(task), access_(access), input_shape_(std::move(input_shape)) {}
  virtual ~Oracle() = default;

  Oracle(const Oracle&) = default;
  Oracle& operator=(const Oracle&) = delete;

  Prediction query(const InputTensor& x) {
    if (x.shape() != input_shape_) {
      throw ShapeError("oracle '" + id_ + "' expects input shape " + input_shape_.to_string() +
                       ", got " + x.shape().to_string());
    }
    ++query_count_;
    Prediction p = evaluate(x);
    if (p.task != task_) {
      throw ProtocolError("oracle '" + id_ + "' answered a " + to_string(p.task) +
                          " prediction, expected " + to_string(task_));
    }
    return truncate(std::move(p), access_);
  }

  void reset_query_count() noexcept { query_count_ = 0; }
  std::uint64_t query_count() const noexcept { return query_count_; }

  const std::string& id() const noexcept { return id_; }
  TaskKind task() const noexcept { return task_; }
  AccessLevel access_level() const noexcept { return access_; }
  const Shape& input_shape() const noexcept { return input_shape_; }

  // Fresh instance with the same target and a zeroed counter.
  virtual std::unique_ptr<Oracle> clone() const = 0;

 protected:
  virtual Prediction evaluate(const InputTensor& x) = 0;

 private:
  std::string id_;
  TaskKind task_;
  AccessLevel access_;
  Shape input_shape_;
  std::uint64_t query_count_ = 0;
};

inline Prediction prediction_from_output(TaskKind task, std::vector<double> out) {
  if (task == TaskKind::kRegression) {
    if (out.empty()) throw ProtocolError("regression model produced no output");
    return Prediction::regression(out.front());
  }
  return Prediction::from_distribution(std::move(out));
}

class LocalOracle final : public Oracle {
 public:
  LocalOracle(std::shared_ptr<const Model> model, AccessLevel access)
      : Oracle(checked(model)->id, model->task, access, model->input_shape),
        model_(std::move(model)) {}
  LocalOracle(Model model, AccessLevel access)
      : LocalOracle(std::make_shared<const Model>(std::move(model)), access) {}

  std::unique_ptr<Oracle> clone() const override {
    return std::make_unique<LocalOracle>(model_, access_level());
  }

  const Model& model() const noexcept { return *model_; }

 protected:
  Prediction evaluate(const InputTensor& x) override {
    return prediction_from_output(model_->task, model_->run(x.values()));
  }

 private:
  static const std::shared_ptr<const Model>& checked(const std::shared_ptr<const Model>& m) {
    if (!m) throw ConfigError("null model");
    m->validate();
    return m;
  }

  std::shared_ptr<const Model> model_;
};

}  // namespace diffattack

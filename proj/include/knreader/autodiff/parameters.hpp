#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "knreader/autodiff/tensor.hpp"

namespace knreader::autodiff {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

// Named parameter tensors in insertion order. Addresses are stable.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other) { *this = other; }
  ParameterSet& operator=(const ParameterSet& other) {
    if (this == &other) return *this;
    params_.clear();
    for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<T>>(*p));
    return *this;
  }
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> value, bool trainable = true) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->grad = Tensor<T>(value.rows(), value.cols());
    p->value = std::move(value);
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(std::string_view name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  const Parameter<T>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  Parameter<T>& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
  }
  const Parameter<T>& at(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  // Copies values (by name) from a set of a possibly different precision.
  template <typename U>
  void assign_from(const ParameterSet<U>& other) {
    for (std::size_t i = 0; i < other.size(); ++i) {
      Parameter<T>& mine = at(other[i].name);
      if (!mine.value.same_shape(other[i].value)) {
        throw ShapeError("parameter '" + mine.name + "' shape mismatch on assignment");
      }
      mine.value = other[i].value.template cast<T>();
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

// Uniform Glorot scaling: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng));
  return t;
}

}  // namespace knreader::autodiff

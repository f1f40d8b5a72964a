#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpg/core/rng.hpp"
#include "rpg/nn/ops.hpp"

namespace rpg::nn {

/// Owns the parameters of one model in registration order; addresses are stable.
template <class T>
class ParamStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> init) {
    for (const auto& p : params_)
      if (p->name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(init)));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<T>*> all() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter<T>*> with_prefix(const std::string& prefix) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_)
      if (p->name.compare(0, prefix.size(), prefix) == 0) out.push_back(p.get());
    return out;
  }

  std::size_t size() const noexcept { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

/// Places parameters on a tape either as trainable leaves or as frozen constants.
template <class T>
struct Binder {
  Tape<T>& tape;
  bool trainable = true;

  Var<T> operator()(Parameter<T>& p) const { return trainable ? tape.parameter(p) : tape.frozen(p); }
};

/// Uniform in +-sqrt(1/fan_in).
template <class T>
Tensor<T> scaled_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.span()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
struct Conv2d {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
         std::size_t stride_, std::size_t pad_, SplitMix64& rng)
      : stride(stride_), pad(pad_) {
    const std::size_t fan_in = in * k * k;
    weight = &store.add(name + ".weight", scaled_uniform<T>({out, in, k, k}, fan_in, rng));
    bias = &store.add(name + ".bias", scaled_uniform<T>({out}, fan_in, rng));
  }

  Var<T> operator()(const Binder<T>& bind, Var<T> x) const {
    return conv2d(x, bind(*weight), std::optional<Var<T>>(bind(*bias)), stride, pad);
  }
};

template <class T>
struct Linear {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, SplitMix64& rng,
         bool with_bias = true) {
    weight = &store.add(name + ".weight", scaled_uniform<T>({out, in}, in, rng));
    if (with_bias) bias = &store.add(name + ".bias", scaled_uniform<T>({out}, in, rng));
  }

  std::size_t in_features() const { return weight->value.dim(1); }
  std::size_t out_features() const { return weight->value.dim(0); }

  Var<T> operator()(const Binder<T>& bind, Var<T> x) const {
    if (bias) return linear(x, bind(*weight), std::optional<Var<T>>(bind(*bias)));
    return linear(x, bind(*weight));
  }
};

/// Copies parameter values between stores of different precision, matched by name.
template <class To, class From>
void copy_parameters(ParamStore<To>& dst, const ParamStore<From>& src) {
  for (const auto* p : src.all()) {
    auto* q = dst.find(p->name);
    if (!q || q->value.shape() != p->value.shape())
      throw std::invalid_argument("copy_parameters: no matching parameter for " + p->name);
    q->value = p->value.template cast<To>();
  }
}

}  // namespace rpg::nn

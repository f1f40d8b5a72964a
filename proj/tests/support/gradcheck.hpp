#pragma once

// Central finite-difference checks of tape gradients, run in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "rpg/core/rng.hpp"
#include "rpg/nn/layers.hpp"

namespace rpg::testing {

struct GradCheckResult {
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index] analytic vs numeric"
  bool ok(double tol) const { return probes > 0 && max_rel_error <= tol; }
};

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero derivatives from
// turning round-off into huge relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using LossBuilder = std::function<nn::Var<double>(nn::Tape<double>&, const nn::Binder<double>&)>;

/// Compares backward() against central differences for `probes` random
/// entries of every parameter (all entries when a parameter is smaller).
inline GradCheckResult check_parameter_gradients(const std::vector<nn::Parameter<double>*>& params,
                                                 const LossBuilder& build, std::uint64_t seed,
                                                 std::size_t probes = 20, double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape<double> tape;
    const nn::Binder<double> bind{tape, true};
    tape.backward(build(tape, bind));
  }
  auto eval = [&] {
    nn::Tape<double> tape;
    const nn::Binder<double> bind{tape, false};
    return build(tape, bind).value().item();
  };

  GradCheckResult res;
  SplitMix64 rng(seed);
  for (auto* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < std::min(probes, idx.size()); ++i)
      std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(idx.size() - 1 - i)))]);
    idx.resize(std::min(probes, idx.size()));
    for (std::size_t k : idx) {
      const double orig = p->value[k];
      p->value[k] = orig + h;
      const double up = eval();
      p->value[k] = orig - h;
      const double down = eval();
      p->value[k] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad[k];
      const double err = relative_error(analytic, numeric);
      ++res.probes;
      if (res.probes == 1 || err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = p->name + "[" + std::to_string(k) + "] " + std::to_string(analytic) + " vs " +
                    std::to_string(numeric);
      }
    }
  }
  return res;
}

using InputLoss = std::function<nn::Var<double>(std::vector<nn::Var<double>>&)>;

/// Gradient check of a function of free input tensors.
inline GradCheckResult check_input_gradients(const std::vector<nn::Tensor<double>>& inputs, const InputLoss& f,
                                             std::uint64_t seed, std::size_t probes = 20, double h = 1e-6) {
  std::vector<std::unique_ptr<nn::Parameter<double>>> owned;
  std::vector<nn::Parameter<double>*> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    owned.push_back(std::make_unique<nn::Parameter<double>>("input" + std::to_string(i), inputs[i]));
    params.push_back(owned.back().get());
  }
  return check_parameter_gradients(
      params,
      [&](nn::Tape<double>&, const nn::Binder<double>& bind) {
        std::vector<nn::Var<double>> vars;
        for (auto* p : params) vars.push_back(bind(*p));
        return f(vars);
      },
      seed, probes, h);
}

/// Uniform random tensor; values within `gap` of zero are pushed away so
/// probes do not straddle a kink of relu-like ops.
inline nn::Tensor<double> random_tensor(nn::Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0,
                                        double gap = 0.0) {
  nn::Tensor<double> t(std::move(shape));
  for (auto& v : t.span()) {
    v = rng.uniform(lo, hi);
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

}  // namespace rpg::testing

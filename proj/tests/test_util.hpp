#pragma once

// Helpers shared by the unit tests: seeded generators and a central
// finite-difference checker for scalar functions of a few tensors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "seqrl/numgrad.hpp"
#include "seqrl/types.hpp"

namespace testutil {

using seqrl::ng::Tape;
using seqrl::ng::Tensor;
using seqrl::ng::Var;

inline Tensor uniform_tensor(seqrl::ng::Shape shape, std::mt19937_64& rng, double lo = -2.0,
                             double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(seqrl::ng::shape_size(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

inline seqrl::Transcript random_sequence(std::mt19937_64& rng, std::size_t min_len,
                                         std::size_t max_len, int alphabet) {
  std::size_t n = min_len + rng() % (max_len - min_len + 1);
  seqrl::Transcript s(n);
  for (auto& x : s) x = static_cast<seqrl::Symbol>(rng() % static_cast<std::uint64_t>(alphabet));
  return s;
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Worst |analytic - numeric| / max(|analytic|, 1e-8) over every input scalar.
inline double max_fd_error(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(f(tape, vars));

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const auto& x : xs) vs.push_back(t.leaf(x));
    return f(t, vs).item();
  };

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad) continue;
    std::vector<double> analytic = tape.has_grad(vars[k])
                                       ? tape.grad(vars[k])
                                       : std::vector<double>(inputs[k].size(), 0.0);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      double saved = probe[k].values[i];
      probe[k].values[i] = saved + h;
      double up = eval(probe);
      probe[k].values[i] = saved - h;
      double down = eval(probe);
      probe[k].values[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]), 1e-8));
    }
  }
  return worst;
}

}  // namespace testutil

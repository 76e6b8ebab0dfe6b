#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "adcorda/tape.hpp"

namespace adcorda {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // Coordinates whose one-sided differences disagree by more than the
  // tolerance straddle a non-smooth point (ReLU kink) and are skipped.
  bool skip_kinks = true;
};

struct GradCheckResult {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string diagnostic;
};

/// Compares the taped gradient of a scalar function of `input` against
/// central finite differences. `forward(tape, x)` must build the function on
/// the given tape and return the scalar loss Var.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1).
template <typename Scalar, typename Forward>
GradCheckResult grad_check(Forward&& forward, const BasicTensor<Scalar>& input, const GradCheckOptions& opts = {}) {
  GradCheckResult result;

  Tape<Scalar> tape;
  const Var x = tape.variable(input);
  const Var loss = forward(tape, x);
  const double f0 = static_cast<double>(tape.value(loss)[0]);
  tape.backward(loss);
  const std::vector<Scalar> analytic(tape.grad(x).begin(), tape.grad(x).end());

  if (!std::isfinite(f0)) {
    result.diagnostic = "non-finite loss at the base point";
    return result;
  }
  for (auto g : analytic) {
    if (!std::isfinite(static_cast<double>(g))) {
      result.diagnostic = "non-finite analytic gradient";
      return result;
    }
  }

  std::vector<std::size_t> coords(input.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coords > 0 && opts.max_coords < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  auto eval = [&](const BasicTensor<Scalar>& at) {
    Tape<Scalar> t;
    const Var xv = t.constant(at);
    return static_cast<double>(t.value(forward(t, xv))[0]);
  };

  const Scalar h = static_cast<Scalar>(opts.step);
  for (auto i : coords) {
    BasicTensor<Scalar> plus = input, minus = input;
    plus[i] += h;
    minus[i] -= h;
    const double fp = eval(plus);
    const double fm = eval(minus);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      result.diagnostic = "non-finite loss at perturbed coordinate " + std::to_string(i);
      result.passed = false;
      return result;
    }
    // Use the actually representable displacement.
    const double width = static_cast<double>(plus[i]) - static_cast<double>(minus[i]);
    const double numeric = (fp - fm) / width;
    const double a = static_cast<double>(analytic[i]);
    const double scale = std::max({std::abs(a), std::abs(numeric), 1.0});
    if (opts.skip_kinks) {
      const double forward_diff = (fp - f0) / (width / 2);
      const double backward_diff = (f0 - fm) / (width / 2);
      if (std::abs(forward_diff - backward_diff) > opts.tolerance * scale) {
        ++result.skipped;
        continue;
      }
    }
    const double rel = std::abs(a - numeric) / scale;
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }

  if (result.checked == 0 || result.skipped > result.checked) {
    result.diagnostic = "too few smooth coordinates (" + std::to_string(result.checked) + " checked, " +
                        std::to_string(result.skipped) + " skipped)";
    result.passed = false;
    return result;
  }
  result.passed = result.max_rel_error < opts.tolerance;
  if (!result.passed) result.diagnostic = "max relative error " + std::to_string(result.max_rel_error);
  return result;
}

}  // namespace adcorda

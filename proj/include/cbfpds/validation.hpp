#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cbfpds/analysis.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/projection.hpp"
#include "cbfpds/sampling.hpp"
#include "cbfpds/scenario.hpp"

namespace cbfpds {

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
  std::optional<Vec> witness;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

/// Points on the faces of the box, `per_face` per face.
inline std::vector<Vec> box_face_points(const Box& box, int per_face, Rng& rng) {
  std::vector<Vec> pts;
  const int n = box.dim();
  for (int i = 0; i < n; ++i) {
    for (double side : {0.0, 1.0}) {
      for (int k = 0; k < per_face; ++k) {
        Vec x = uniform_in_box(box, rng);
        x[i] = side == 0.0 ? box.lower[i] : box.upper[i];
        pts.push_back(std::move(x));
      }
    }
  }
  return pts;
}

}  // namespace detail

/// Numerical spot checks of the standing assumptions. Failed checks carry a witness point.
inline ValidationReport validate_scenario(const Scenario& s, int samples, Rng& rng) {
  if (samples < 1) throw ValidationError("validate_scenario needs at least one sample");
  ValidationReport rep;
  auto add = [&](std::string name, bool ok, std::string detail, std::optional<Vec> witness = std::nullopt) {
    rep.checks.push_back({std::move(name), ok, std::move(detail), std::move(witness)});
  };

  try {
    check_consistency(s);
    add("consistency", true, "dimensions agree, a > 0");
  } catch (const Error& e) {
    add("consistency", false, e.what());
    return rep;
  }

  const Vec origin = Vec::Zero(s.dim);
  const double h0 = s.barrier.value(origin);
  add("origin-in-interior", h0 > 0.0, "h(0) = " + std::to_string(h0), h0 > 0.0 ? std::nullopt : std::optional(origin));

  if (s.barrier.is_quadratic()) {
    add("compact", true, "quadratic barrier with SPD Q");
  } else {
    std::optional<Vec> bad;
    for (const Vec& x : detail::box_face_points(s.bounds, std::max(16, samples / 8), rng)) {
      if (s.barrier.value(x) >= 0.0) {
        bad = x;
        break;
      }
    }
    add("compact", !bad, bad ? "safe set reaches the bounding box" : "h < 0 on every sampled face point", bad);
  }

  if (h0 > 0.0) {
    std::optional<Vec> bad;
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples && !bad; ++k) {
      Vec y;
      try {
        y = boundary_point_along(s.barrier, origin, random_unit_vector(s.dim, rng));
      } catch (const Error&) {
        bad = origin;
        break;
      }
      const double g = s.barrier.gradient(y).norm();
      worst = std::min(worst, g);
      if (!(g > s.barrier.gradient_tolerance())) bad = y;
    }
    add("boundary-gradient", !bad, "min ||grad h|| on sampled boundary = " + std::to_string(worst), bad);
  } else {
    add("boundary-gradient", false, "skipped: origin not interior", origin);
  }

  if (s.controller.present()) {
    const double r = s.f0(origin).norm();
    add("origin-equilibrium", r <= 1e-9, "||f0(0)|| = " + std::to_string(r), r <= 1e-9 ? std::nullopt : std::optional(origin));
  }

  if (s.G) {
    const Sampler in_s = safe_set_sampler(s);
    const double alpha = check_strong_monotonicity(effective_field(s), *s.G, std::max(1000, samples), in_s, rng);
    add("strong-monotonicity", alpha > 0.0, "alpha_est = " + std::to_string(alpha));
  }

  if (h0 > 0.0) {
    const Sampler in_s = safe_set_sampler(s);
    std::optional<Vec> bad;
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
      const Vec x = in_s(rng);
      const double m = s.gamma(std::max(0.0, s.barrier.value(x))) + 1e-8 - distance_to_boundary(x, s.barrier);
      if (m < worst) {
        worst = m;
        if (m < 0.0) bad = x;
      }
    }
    add("gamma-bound", !bad, "min gamma(h) - d(x, dS) = " + std::to_string(worst), bad);
  }
  return rep;
}

}  // namespace cbfpds

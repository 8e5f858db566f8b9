#pragma once

#include <gsl/gsl_integration.h>

#include <cmath>
#include <memory>
#include <vector>

#include "cpgrating/constants.hpp"
#include "cpgrating/errors.hpp"

namespace cpgrating::quad {

/// Nodes and weights of a one-dimensional rule.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  auto integrate(F&& f) const {
    decltype(f(0.0) * 1.0) sum{};
    for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(nodes[i]);
    return sum;
  }
};

/// n-point Gauss-Legendre rule on [a, b].
inline Rule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)>
      table(gsl_integration_glfixed_table_alloc(static_cast<std::size_t>(n)),
            &gsl_integration_glfixed_table_free);
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    gsl_integration_glfixed_point(a, b, static_cast<std::size_t>(i), &r.nodes[i], &r.weights[i],
                                  table.get());
  }
  return r;
}

/// Semi-infinite rule on (0, inf): x = scale (1 - t)/(1 + t), t Gauss-Legendre on (-1, 1).
/// No node sits at x = 0.
inline Rule semi_infinite(int n, double scale) {
  const Rule base = gauss_legendre(n);
  Rule r;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double t = base.nodes[i];
    r.nodes.push_back(scale * (1.0 - t) / (1.0 + t));
    r.weights.push_back(base.weights[i] * scale * 2.0 / ((1.0 + t) * (1.0 + t)));
  }
  return r;
}

/// Rule on (-inf, inf): x = scale tan(theta), theta Gauss-Legendre on (-pi/2, pi/2).
/// Nodes are symmetric about 0; with n even none sits at 0.
inline Rule tangent_line(int n, double scale) {
  const Rule base = gauss_legendre(n, -0.5 * kPi, 0.5 * kPi);
  Rule r;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double th = base.nodes[i];
    const double c = std::cos(th);
    r.nodes.push_back(scale * std::tan(th));
    r.weights.push_back(base.weights[i] * scale / (c * c));
  }
  return r;
}

}  // namespace cpgrating::quad

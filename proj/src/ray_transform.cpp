#include "asymscat/ray_transform.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "asymscat/quadrature.hpp"

namespace asymscat {

namespace {
constexpr double kPi = std::numbers::pi;
}

double sin_power(double s, int m) {
  double r = 1.0;
  const double v = std::sin(s);
  for (int i = 0; i < m; ++i) r *= v;
  return r;
}

GreatCircle GreatCircle::make(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double rho) {
  if (u.size() != v.size()) throw std::invalid_argument("GreatCircle: dimension mismatch");
  if (std::abs(u.norm() - 1.0) > 1e-12 || std::abs(v.norm() - 1.0) > 1e-12 || std::abs(u.dot(v)) > 1e-12)
    throw std::invalid_argument("GreatCircle: u, v must be orthonormal");
  if (!(rho > 0.0)) throw std::invalid_argument("GreatCircle: rho must be positive");
  return GreatCircle{u, v, rho};
}

Eigen::VectorXd GreatCircle::point(double t) const {
  const double s = t / rho;
  return rho * (u * std::cos(s) + v * std::sin(s));
}

Eigen::VectorXd GreatCircle::tangent(double t) const {
  const double s = t / rho;
  return -u * std::sin(s) + v * std::cos(s);
}

double GreatCircle::period() const { return 2.0 * kPi * rho; }

GreatCircle GreatCircle::rotated(double theta0) const {
  const double c = std::cos(theta0), s = std::sin(theta0);
  return GreatCircle{u * c + v * s, -u * s + v * c, rho};
}

namespace {

double halton(std::uint64_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<GreatCircle> geodesic_family(const SphereSpec& spec, int count, std::uint64_t seed) {
  std::vector<GreatCircle> out;
  out.reserve(count);
  if (spec.n == 3) {
    const std::uint64_t offset = 1 + splitmix(seed) % 4096;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t idx = offset + static_cast<std::uint64_t>(i);
      const double u1 = halton(idx, 2), u2 = halton(idx, 3), u3 = halton(idx, 5);
      // uniform rotation from a unit quaternion
      const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
      const Eigen::Quaterniond q(b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2), a * std::cos(2 * kPi * u2),
                                 b * std::sin(2 * kPi * u3));
      const Eigen::Matrix3d R = q.normalized().toRotationMatrix();
      Eigen::VectorXd u = R.col(0), v = R.col(1);
      v -= u.dot(v) * u;
      out.push_back(GreatCircle::make(u.normalized(), v.normalized(), spec.rho));
    }
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd u(spec.n), v(spec.n);
    for (int j = 0; j < spec.n; ++j) u[j] = nd(rng);
    for (int j = 0; j < spec.n; ++j) v[j] = nd(rng);
    u.normalize();
    v -= u.dot(v) * u;
    v.normalize();
    v -= u.dot(v) * u;
    out.push_back(GreatCircle::make(u, v.normalized(), spec.rho));
  }
  return out;
}

namespace {

// Gauss-Legendre on [0, pi rho], with the M vs 2M check
template <class F>
TransformValue half_period(const GreatCircle& g, const QuadratureOptions& q, F&& integrand) {
  auto run = [&](int m) {
    const QuadratureRule r = gauss_legendre(m, 0.0, kPi * g.rho);
    return r.integrate(integrand);
  };
  TransformValue tv;
  tv.value = run(q.gauss_nodes);
  if (q.check) {
    tv.richardson = std::abs(tv.value - run(2 * q.gauss_nodes));
    tv.under_resolved = tv.richardson > q.resolution_tol * std::max(1.0, std::abs(tv.value));
  }
  return tv;
}

template <class F>
TransformValue full_period(const GreatCircle& g, const QuadratureOptions& q, F&& integrand) {
  auto run = [&](int m) { return periodic_trapezoid(m, g.period()).integrate(integrand); };
  TransformValue tv;
  tv.value = run(q.trapezoid_nodes);
  if (q.check) {
    tv.richardson = std::abs(tv.value - run(2 * q.trapezoid_nodes));
    tv.under_resolved = tv.richardson > q.resolution_tol * std::max(1.0, std::abs(tv.value));
  }
  return tv;
}

}  // namespace

TransformValue weighted_symbol_transform(const ScalarSymbol& f, const GreatCircle& g, int k, double lambda,
                                         const QuadratureOptions& q) {
  if (k < 2) throw std::invalid_argument("weighted_symbol_transform: k must be >= 2");
  const double L = std::abs(lambda);
  return half_period(g, q, [&](double t) {
    const double s = t / g.rho;
    const Eigen::VectorXd mu = L * std::sin(s) * g.tangent(t);
    return f(L * std::cos(s), mu, g.point(t)) * sin_power(s, k - 1);
  });
}

TransformValue weighted_symbol_transform(const SymbolQuadratic& f, const GreatCircle& g, int k, double lambda,
                                         const QuadratureOptions& q) {
  if (k < 2) throw std::invalid_argument("weighted_symbol_transform: k must be >= 2");
  TransformValue tv;
  if (f.B) {
    tv = tensor_transform(FieldEvaluator(*f.B), g, k + 1, q);
  } else {
    tv = half_period(g, q, [&](double t) {
      const Eigen::VectorXd d = g.tangent(t);
      return d.dot(f.B_at(g.point(t)) * d) * sin_power(t / g.rho, k + 1);
    });
  }
  tv.value *= lambda * lambda;
  tv.richardson *= lambda * lambda;
  return tv;
}

TransformValue tensor_transform(const FieldEvaluator& W, const GreatCircle& g, int m, const QuadratureOptions& q) {
  if (m < 0) throw std::invalid_argument("tensor_transform: negative weight");
  return half_period(g, q, [&](double t) {
    const Eigen::VectorXd x = g.point(t), d = g.tangent(t);
    return W.quadratic(x.data(), d.data()) * sin_power(t / g.rho, m);
  });
}

TransformValue tensor_transform(const BoundaryField& W, const GreatCircle& g, int m, const QuadratureOptions& q) {
  if (W.rank() != Rank::Sym2) throw std::invalid_argument("tensor_transform: sym2 field required");
  return tensor_transform(FieldEvaluator(W), g, m, q);
}

TransformValue scalar_transform(const FieldEvaluator& f, const GreatCircle& g, int m, const QuadratureOptions& q) {
  return half_period(g, q, [&](double t) {
    const Eigen::VectorXd x = g.point(t);
    return f.scalar(x.data()) * sin_power(t / g.rho, m);
  });
}

TransformValue moment_transform(const FieldEvaluator& W, const GreatCircle& g, const Poly& p,
                                const QuadratureOptions& q) {
  return full_period(g, q, [&](double t) {
    const Eigen::VectorXd x = g.point(t), d = g.tangent(t);
    return p.eval(std::span<const double>(x.data(), x.size())) * W.quadratic(x.data(), d.data());
  });
}

TransformValue moment_transform(const BoundaryField& W, const GreatCircle& g, const Poly& p,
                                const QuadratureOptions& q) {
  if (W.rank() != Rank::Sym2) throw std::invalid_argument("moment_transform: sym2 field required");
  return moment_transform(FieldEvaluator(W), g, p, q);
}

ShiftOdeReport shift_ode_residual(const BoundaryField& W, const GreatCircle& g, int m, int alpha_count,
                                  bool literal_coefficient, const QuadratureOptions& q) {
  if (std::abs(g.rho - 1.0) > 1e-12) throw std::invalid_argument("shift_ode_residual: requires rho = 1");
  if (alpha_count < 64) throw std::invalid_argument("shift_ode_residual: alpha grid needs >= 64 points");
  if (m < 0) throw std::invalid_argument("shift_ode_residual: negative weight");
  const FieldEvaluator ev(W);
  const int n = alpha_count;
  auto G = [&](double t) {
    const Eigen::VectorXd x = g.point(t), d = g.tangent(t);
    return ev.quadratic(x.data(), d.data());
  };
  const QuadratureRule rule = gauss_legendre(q.gauss_nodes, 0.0, kPi);
  auto I = [&](int mm, double a) {
    return rule.integrate([&](double t) { return G(t + a) * sin_power(t, mm); });
  };

  ShiftOdeReport rep;
  std::vector<double> Im(n), Im2(n, 0.0), I0(n), I1(n);
  for (int i = 0; i < n; ++i) {
    const double a = 2 * kPi * i / n;
    rep.alpha.push_back(a);
    Im[i] = I(m, a);
    if (m >= 2) Im2[i] = I(m - 2, a);
    I0[i] = I(0, a);
    I1[i] = I(1, a);
  }
  rep.I = Im;

  // spectral derivative of order `order` on the periodic grid
  auto spectral = [&](const std::vector<double>& f, int order, bool& bad) {
    std::vector<std::complex<double>> c(n);
    double cmax = 0.0;
    for (int k = 0; k < n; ++k) {
      std::complex<double> s = 0.0;
      for (int i = 0; i < n; ++i) s += f[i] * std::polar(1.0, -2 * kPi * k * i / n);
      c[k] = s / static_cast<double>(n);
      cmax = std::max(cmax, std::abs(c[k]));
    }
    // modes next to Nyquist must be negligible
    for (int k = n / 2 - 1; k <= n / 2 + 1; ++k)
      if (std::abs(c[k]) > 1e-10 * std::max(1.0, cmax)) bad = true;
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
      std::complex<double> s = 0.0;
      for (int k = 0; k < n; ++k) {
        const int w = (k <= n / 2) ? k : k - n;
        if (2 * std::abs(w) == n) continue;
        s += c[k] * std::pow(std::complex<double>(0.0, w), order) * std::polar(1.0, 2 * kPi * k * i / n);
      }
      out[i] = s.real();
    }
    return out;
  };

  bool bad = false;
  if (m >= 2) {
    const auto d2 = spectral(Im, 2, bad);
    const double c = literal_coefficient ? m : static_cast<double>(m) * m;
    for (int i = 0; i < n; ++i)
      rep.residual = std::max(rep.residual, std::abs(d2[i] + c * Im[i] - m * (m - 1.0) * Im2[i]));
  }
  const auto d0 = spectral(I0, 1, bad);
  const auto d1 = spectral(I1, 2, bad);
  for (int i = 0; i < n; ++i) {
    const double a = rep.alpha[i];
    rep.endpoint0 = std::max(rep.endpoint0, std::abs(d0[i] - (G(a + kPi) - G(a))));
    rep.endpoint1 = std::max(rep.endpoint1, std::abs(I1[i] + d1[i] - (G(a + kPi) + G(a))));
  }
  rep.under_resolved = bad;
  return rep;
}

}  // namespace asymscat

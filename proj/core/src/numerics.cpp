#include "flexmuse/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "flexmuse/error.hpp"

namespace flexmuse {

double vec_dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw UsageError("vec_dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vec_norm(const Vec& v) { return std::sqrt(vec_dot(v, v)); }

Vec vec_scale(const Vec& v, double s) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
  return out;
}

Vec vec_add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw UsageError("vec_add: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec vec_sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw UsageError("vec_sub: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec vec_hadamard(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw UsageError("vec_hadamard: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vec softmax(const Vec& x) {
  if (x.empty()) throw UsageError("softmax: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  Vec out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

double sigmoid(double x) {
  // Branch-stable: never exponentiates a large positive argument.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec sigmoid_vec(const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

void check_finite(const Vec& v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(what + ": non-finite value at coordinate " + std::to_string(i));
    }
  }
}

double finite_diff_at(const ScalarFn& f, const Vec& x, std::size_t i, double h) {
  Vec xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  const double fp = f(xp);
  const double fm = f(xm);
  if (!std::isfinite(fp) || !std::isfinite(fm)) {
    throw NumericError("finite_diff: non-finite f at coordinate " + std::to_string(i));
  }
  return (fp - fm) / (2.0 * h);
}

Vec finite_diff_grad(const ScalarFn& f, const Vec& x, double h) {
  if (h <= 0.0) throw UsageError("finite_diff_grad: h must be positive");
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = finite_diff_at(f, x, i, h);
  return g;
}

double max_rel_err(const Vec& analytic, const Vec& numeric) {
  if (analytic.size() != numeric.size()) throw UsageError("max_rel_err: dimension mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

GradReport make_grad_report(const std::string& name, Vec analytic, Vec numeric) {
  GradReport r;
  r.param_name = name;
  r.max_rel_err = max_rel_err(analytic, numeric);
  r.analytic = std::move(analytic);
  r.numeric = std::move(numeric);
  return r;
}

}  // namespace flexmuse

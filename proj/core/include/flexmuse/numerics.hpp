#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace flexmuse {

using Vec = std::vector<double>;

// Finite-difference comparison for one named parameter block.
struct GradReport {
  std::string param_name;
  Vec analytic;
  Vec numeric;
  double max_rel_err = 0.0;
};

double vec_dot(const Vec& a, const Vec& b);
double vec_norm(const Vec& v);
Vec vec_scale(const Vec& v, double s);
Vec vec_add(const Vec& a, const Vec& b);
Vec vec_sub(const Vec& a, const Vec& b);
Vec vec_hadamard(const Vec& a, const Vec& b);

// Numerically stable (max-subtraction) softmax.
Vec softmax(const Vec& x);

double sigmoid(double x);
Vec sigmoid_vec(const Vec& x);

void check_finite(const Vec& v, const std::string& what);

using ScalarFn = std::function<double(const Vec&)>;

// Central differences, one full gradient.
Vec finite_diff_grad(const ScalarFn& f, const Vec& x, double h);

// Central difference for a single coordinate; the sampled gradcheck path.
double finite_diff_at(const ScalarFn& f, const Vec& x, std::size_t i, double h);

// max over coordinates of |a-n| / max(|a|,|n|,1e-8)
double max_rel_err(const Vec& analytic, const Vec& numeric);

GradReport make_grad_report(const std::string& name, Vec analytic, Vec numeric);

}  // namespace flexmuse

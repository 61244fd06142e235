#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace envpred {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Dense row-major array of doubles with an explicit shape. Gradients are not
// stored here; the autodiff layer pairs two of these per graph node.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.0) {
    for (int d : shape)
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(shape));
  }
  Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    if (static_cast<int64_t>(v.size()) != shape_numel(shape))
      throw std::invalid_argument("value count " + std::to_string(v.size()) + " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double x) {
    Tensor t(std::move(s));
    for (double& e : t.v) e = x;
    return t;
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(v.size()); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return v[static_cast<size_t>(i)]; }
  double& at2(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double at2(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double& at3(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at3(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const {
    for (double e : v)
      if (!std::isfinite(e)) return false;
    return true;
  }
};

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw std::runtime_error(std::string("non-finite values in ") + what);
}

}  // namespace envpred

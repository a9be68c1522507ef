#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace softsim {

/// Dense row-major array of doubles with an explicit shape.
/// Scalars use an empty shape (numel == 1).
struct Array {
  std::vector<int> shape;
  std::vector<double> data;

  Array() = default;
  Array(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  static Array zeros(std::vector<int> s) {
    std::size_t n = numel_of(s);
    return Array(std::move(s), std::vector<double>(n, 0.0));
  }

  static Array full(std::vector<int> s, double v) {
    std::size_t n = numel_of(s);
    return Array(std::move(s), std::vector<double>(n, v));
  }

  static Array scalar(double v) { return Array({}, {v}); }

  static Array vec(std::vector<double> d) {
    int n = static_cast<int>(d.size());
    return Array({n}, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// (row, col) access for 2-d arrays.
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

inline bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline double inf_norm(const Array& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

inline double l2_norm(const Array& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return std::sqrt(s);
}

inline double dot_val(const Array& a, const Array& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline Array axpy(double alpha, const Array& x, const Array& y) {
  Array out = y;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] += alpha * x.data[i];
  return out;
}

inline Array scaled(const Array& x, double alpha) {
  Array out = x;
  for (double& v : out.data) v *= alpha;
  return out;
}

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace softsim

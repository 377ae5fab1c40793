#pragma once

#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace pderoll {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Raised before any computation when an operation receives incompatible shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& a, const Shape& b)
      : std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                              to_string(b)) {}
  ShapeError(std::string_view op, const std::string& what)
      : std::invalid_argument(std::string(op) + ": " + what) {}
};

template <class E>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};
template <class E>
inline constexpr bool is_complex_v = is_complex<E>::value;

template <class E>
struct real_of {
  using type = E;
};
template <class T>
struct real_of<std::complex<T>> {
  using type = T;
};
template <class E>
using real_of_t = typename real_of<E>::type;

/// Complex conjugate for complex element types, identity for real ones.
template <class E>
constexpr E conj_if(const E& x) {
  if constexpr (is_complex_v<E>) {
    return std::conj(x);
  } else {
    return x;
  }
}

/// Dense row-major grid of real or complex scalars.
template <class E>
struct Tensor {
  Shape shape;
  std::vector<E> data;

  Tensor() = default;
  explicit Tensor(Shape s, E fill = E{}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<E> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("Tensor", "element count " + std::to_string(data.size()) +
                                     " does not match shape " + to_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  E& operator[](std::size_t i) { return data[i]; }
  const E& operator[](std::size_t i) const { return data[i]; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (const E& x : data) out.data.push_back(static_cast<U>(x));
    return out;
  }

  bool operator==(const Tensor& other) const = default;
};

}  // namespace pderoll

#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "dense_ddu/error.hpp"

namespace ddu {

enum class DType { f32, f64, u8, i32 };

inline std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "float32";
    case DType::f64: return "float64";
    case DType::u8: return "uint8";
    case DType::i32: return "int32";
  }
  return "?";
}

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
    case DType::i32: return 4;
  }
  return 0;
}

template <class T>
struct dtype_of;
template <> struct dtype_of<float> { static constexpr DType value = DType::f32; };
template <> struct dtype_of<double> { static constexpr DType value = DType::f64; };
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::u8; };
template <> struct dtype_of<std::int32_t> { static constexpr DType value = DType::i32; };

template <class T>
concept TensorElement = requires { dtype_of<T>::value; };

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major tensor with one of the four exchange dtypes.
class Tensor {
 public:
  using Storage = std::variant<std::vector<float>, std::vector<double>,
                               std::vector<std::uint8_t>, std::vector<std::int32_t>>;

  Tensor() : Tensor(Shape{0}, std::vector<double>{}) {}

  template <TensorElement T>
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != std::get<std::vector<T>>(data_).size()) {
      throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                            std::to_string(std::get<std::vector<T>>(data_).size()) + " elements");
    }
  }

  static Tensor zeros(DType dtype, Shape shape) {
    const std::size_t n = element_count(shape);
    switch (dtype) {
      case DType::f32: return Tensor(std::move(shape), std::vector<float>(n));
      case DType::f64: return Tensor(std::move(shape), std::vector<double>(n));
      case DType::u8: return Tensor(std::move(shape), std::vector<std::uint8_t>(n));
      case DType::i32: return Tensor(std::move(shape), std::vector<std::int32_t>(n));
    }
    throw UnsupportedFormat("unknown dtype");
  }

  DType dtype() const {
    return std::visit([](const auto& v) {
      return dtype_of<typename std::decay_t<decltype(v)>::value_type>::value;
    }, data_);
  }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return element_count(shape_); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  template <TensorElement T>
  bool holds() const noexcept { return std::holds_alternative<std::vector<T>>(data_); }

  template <TensorElement T>
  std::span<const T> values() const {
    if (!holds<T>()) {
      throw ValidationError("tensor holds " + std::string(dtype_name(dtype())) + ", requested " +
                            std::string(dtype_name(dtype_of<T>::value)));
    }
    return std::get<std::vector<T>>(data_);
  }

  template <TensorElement T>
  std::span<T> values() {
    if (!holds<T>()) {
      throw ValidationError("tensor holds " + std::string(dtype_name(dtype())) + ", requested " +
                            std::string(dtype_name(dtype_of<T>::value)));
    }
    return std::get<std::vector<T>>(data_);
  }

  /// Raw little-endian payload bytes (host is little-endian; checked in npy.hpp).
  std::span<const std::byte> bytes() const {
    return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, data_);
  }
  std::span<std::byte> mutable_bytes() {
    return std::visit([](auto& v) { return std::as_writable_bytes(std::span(v)); }, data_);
  }

  /// Floating-point payload promoted to float64.
  std::vector<double> to_f64() const {
    return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
  }

  /// Integer label payload (uint8 or int32) widened to int32.
  std::vector<std::int32_t> to_labels() const {
    if (holds<std::uint8_t>()) {
      const auto& v = std::get<std::vector<std::uint8_t>>(data_);
      return {v.begin(), v.end()};
    }
    if (holds<std::int32_t>()) return std::get<std::vector<std::int32_t>>(data_);
    throw ValidationError("label tensor must be uint8 or int32, got " +
                          std::string(dtype_name(dtype())));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  Storage data_;
};

}  // namespace ddu

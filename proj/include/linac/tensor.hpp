#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace linac {

using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string dims_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

/// Raised when a computation produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense tensor owning its storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T{})
      : dims_(std::move(dims)), data_(dims_product(dims_), fill) {}
  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != dims_product(dims_))
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match dims " + dims_string(dims_));
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same storage viewed under new dims of equal volume.
  Tensor reshaped(Dims dims) const {
    if (dims_product(dims) != data_.size())
      throw std::invalid_argument("cannot reshape " + dims_string(dims_) + " to " +
                                  dims_string(dims));
    return Tensor(std::move(dims), data_);
  }

  /// Items [first, first+count) along the leading axis.
  Tensor slice(std::size_t first, std::size_t count) const {
    if (dims_.empty() || first + count > dims_[0])
      throw std::out_of_range("slice beyond leading extent");
    Dims d = dims_;
    d[0] = count;
    const std::size_t stride = data_.size() / dims_[0];
    return Tensor(std::move(d), std::vector<T>(data_.begin() + first * stride,
                                               data_.begin() + (first + count) * stride));
  }

  /// Volume of one item along the leading axis.
  std::size_t item_size() const { return dims_.empty() ? 0 : data_.size() / dims_[0]; }

  std::span<const T> item(std::size_t i) const {
    const std::size_t n = item_size();
    return std::span<const T>(data_).subspan(i * n, n);
  }
  std::span<T> item(std::size_t i) {
    const std::size_t n = item_size();
    return std::span<T>(data_).subspan(i * n, n);
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

/// Stack equally shaped items along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) return {};
  Dims d{items.size()};
  d.insert(d.end(), items[0].dims().begin(), items[0].dims().end());
  std::vector<T> data;
  data.reserve(dims_product(d));
  for (const auto& t : items) {
    if (t.dims() != items[0].dims())
      throw std::invalid_argument("stack: mismatched dims " + dims_string(t.dims()));
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  return Tensor<T>(std::move(d), std::move(data));
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NonFiniteError(std::string("non-finite values in ") + what);
}

}  // namespace linac

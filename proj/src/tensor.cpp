#include "pbacc/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pbacc {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void validate(const std::vector<std::size_t>& shape, std::size_t coding_axis) {
  if (shape.empty()) throw std::invalid_argument("tensor rank must be >= 1");
  for (auto e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive");
  }
  if (coding_axis >= shape.size()) {
    throw std::invalid_argument("coding axis " + std::to_string(coding_axis) +
                                " out of range for rank " +
                                std::to_string(shape.size()));
  }
}

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.write(buf, 8);
}

template <typename T>
T get_le(std::istream& in) {
  char buf[8];
  if (!in.read(buf, 8)) throw std::runtime_error("truncated tensor stream");
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::size_t coding_axis)
    : shape_(std::move(shape)), coding_axis_(coding_axis) {
  validate(shape_, coding_axis_);
  data_.assign(product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               std::size_t coding_axis)
    : shape_(std::move(shape)), data_(std::move(data)), coding_axis_(coding_axis) {
  validate(shape_, coding_axis_);
  if (data_.size() != product(shape_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape product " +
                                std::to_string(product(shape_)));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::outer_size() const {
  std::size_t n = 1;
  for (std::size_t a = 0; a < coding_axis_; ++a) n *= shape_[a];
  return n;
}

std::size_t Tensor::inner_size() const {
  std::size_t n = 1;
  for (std::size_t a = coding_axis_ + 1; a < shape_.size(); ++a) n *= shape_[a];
  return n;
}

std::vector<double> Tensor::slice(std::size_t k) const {
  const auto outer = outer_size();
  const auto inner = inner_size();
  const auto extent = coding_extent();
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const auto* src = data_.data() + (o * extent + k) * inner;
    std::copy(src, src + inner, out.begin() + static_cast<std::ptrdiff_t>(o * inner));
  }
  return out;
}

std::vector<std::size_t> Tensor::shape_with_coding_extent(std::size_t extent) const {
  auto s = shape_;
  s[coding_axis_] = extent;
  return s;
}

Tensor& Tensor::operator+=(const Tensor& rhs) {
  if (shape_ != rhs.shape_) throw std::invalid_argument("shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& rhs) {
  if (shape_ != rhs.shape_) throw std::invalid_argument("shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double a) {
  for (auto& v : data_) v *= a;
  return *this;
}

Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
Tensor operator*(double a, Tensor t) { return t *= a; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_rel_diff(const Tensor& a, const Tensor& b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return m;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  put_le<std::uint64_t>(out, t.rank());
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (double v : t.data()) put_le<double>(out, v);
}

Tensor read_tensor(std::istream& in) {
  const auto rank = get_le<std::uint64_t>(in);
  if (rank == 0 || rank > 64) throw std::runtime_error("bad tensor rank in stream");
  std::vector<std::size_t> shape(rank);
  for (auto& e : shape) e = get_le<std::uint64_t>(in);
  std::vector<double> data(product(shape));
  for (auto& v : data) v = get_le<double>(in);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace pbacc

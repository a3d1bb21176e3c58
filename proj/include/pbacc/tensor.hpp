#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace pbacc {

/// Dense row-major real tensor with one designated coding axis.
///
/// The coding axis is the dimension that the codec splits into groups of K
/// slices; every other axis is carried through encode/decode untouched.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, std::size_t coding_axis = 0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         std::size_t coding_axis = 0);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::size_t coding_axis() const { return coding_axis_; }
  [[nodiscard]] std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t coding_extent() const { return shape_[coding_axis_]; }

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::vector<double>& values() { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// 2-D accessors; only valid for rank-2 tensors.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Layout along the coding axis: data index of element (outer, k, inner) is
  /// (outer * coding_extent + k) * inner_size + inner.
  [[nodiscard]] std::size_t outer_size() const;
  [[nodiscard]] std::size_t inner_size() const;

  /// Number of elements in one slice orthogonal to the coding axis.
  [[nodiscard]] std::size_t slice_size() const { return outer_size() * inner_size(); }

  /// Copies slice k of the coding axis out into a flat buffer of slice_size().
  [[nodiscard]] std::vector<double> slice(std::size_t k) const;

  /// Shape of this tensor with the coding-axis extent replaced.
  [[nodiscard]] std::vector<std::size_t> shape_with_coding_extent(std::size_t extent) const;

  [[nodiscard]] bool same_shape(const Tensor& other) const {
    return shape_ == other.shape_ && coding_axis_ == other.coding_axis_;
  }

  Tensor& operator+=(const Tensor& rhs);
  Tensor& operator-=(const Tensor& rhs);
  Tensor& operator*=(double a);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::size_t coding_axis_ = 0;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator-(Tensor lhs, const Tensor& rhs);
Tensor operator*(double a, Tensor t);

/// Largest |a_i - b_i|.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Largest |a_i - b_i| / max(|b_i|, floor).
double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-12);

// Binary layout: u64 rank, u64 shape[rank], then prod(shape) f64 values, all
// little-endian. The coding axis is not stored; readers get axis 0.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace pbacc

#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double tensors. Only the operations the detector needs are provided.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecnu {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

class Tape;

/// Shared handle to a dense tensor. Copies of a Tensor alias the same storage;
/// use `clone()` for an independent value.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor from(Shape shape, std::vector<double> data);
  /// A leaf that requires gradients. Its grad buffer is allocated and zeroed.
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Leading dimension; 1 for scalars.
  std::size_t rows() const;
  /// Product of all trailing dimensions.
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Tensors are shared handles; constness does not extend to the buffers.
  std::span<double> mutable_data() const;
  /// Empty unless the tensor requires gradients.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;

  bool requires_grad() const;
  bool defined() const { return impl_ != nullptr; }
  void zero_grad();

  double item() const;
  double at(std::size_t row, std::size_t col) const;

  /// Deep copy of the values. Preserves requires_grad with a fresh zero grad.
  Tensor clone() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    const Tape* producer = nullptr;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

/// Ordered record of executed operations. Ops append an adjoint closure when
/// any input requires gradients; `backward` replays them newest-first and then
/// drops them, releasing every intermediate. Parameters live outside the tape.
///
/// A tape constructed with `recording == false` never records, which is how
/// inference runs without building a graph.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  /// Accumulates d(loss)/d(leaf) into every reachable leaf's grad, then clears.
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }

  /// Creates an op output. It requires gradients when recording and any input does.
  Tensor make_output(Shape shape, std::vector<double> data,
                     std::initializer_list<const Tensor*> inputs);
  Tensor make_output(Shape shape, std::vector<double> data, std::span<const Tensor> inputs);
  void record(std::function<void()> adjoint);

 private:
  bool recording_;
  std::vector<std::function<void()>> entries_;
};

namespace ops {

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise sum of equal shapes, or `b` with `a.cols()` elements broadcast
/// over every row of `a`.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
inline Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  return add(tape, a, bias);
}

Tensor relu(Tape& tape, const Tensor& a);

/// Concatenation of rank-2 tensors along axis 0 or 1.
Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);

/// Row lookup into a rank-2 table. Backward scatter-adds, so repeated indices accumulate.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> indices);

/// Row i of the result is the sum of every value row whose segment id is i.
/// Within a segment, each column is summed in ascending value order, so the
/// result does not depend on the order of (row, segment) pairs.
Tensor segment_sum(Tape& tape, const Tensor& values, std::span<const std::size_t> segments,
                   std::size_t n_segments);

/// Mean of squared differences over all elements; a scalar.
Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target);

/// Sum of all elements; a scalar.
Tensor sum(Tape& tape, const Tensor& a);

}  // namespace ops
}  // namespace ecnu

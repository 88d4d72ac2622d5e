#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace csiqa::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major double tensor. Copies share storage; use clone() for a
/// deep copy. Values produced by operations are never modified afterwards;
/// only leaf parameters are written to, by initializers and the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor eye(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Leaf-only mutation (initialization, optimizer updates, test perturbations).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  // Accumulated gradient; empty span if nothing has flowed into it yet.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();  // zeroes an allocated gradient in place

  Tensor clone() const;   // deep copy of data, keeps requires_grad, drops grad
  Tensor detach() const;  // deep copy of data, no grad tracking

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations while it is the active tape on this
/// thread. Construction activates it, destruction restores the previous one.
/// Without an active tape operations run in inference mode and nothing is
/// recorded.
class GradTape {
 public:
  using BackwardFn = std::function<void()>;

  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* current();

  void record(std::shared_ptr<detail::TensorImpl> output, BackwardFn fn);
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays every entry once, newest first.
  // Leaf gradients accumulate; the tape is consumed.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  GradTape* previous_ = nullptr;
  bool consumed_ = false;
};

// Suspends recording for its lifetime (evaluation inside a training step).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

// Convenience: backward through the active tape.
void backward(const Tensor& loss);

}  // namespace csiqa::nn

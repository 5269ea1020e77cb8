#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "garamost/errors.hpp"

namespace garamost {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

// Recorded primitive: the inputs it read and the closure that pushes the
// output gradient back into them. The closure receives the output itself so
// it never has to capture it (which would form a reference cycle).
template <typename T>
struct GradNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(std::span<const T> grad_out, const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty == absent
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;  // null for leaves

  // Zero-filled on first use.
  std::span<T> grad_buffer();
};

void note_allocation(std::int64_t numel);

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> inputs,
                      std::function<void(std::span<const T>, const TensorImpl<T>&)> backward);

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(std::span<const T>, const TensorImpl<T>&)> backward);

}  // namespace detail

bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Records the element count of every tensor buffer created on this thread
// while alive. Used to prove that an operation never materializes a buffer
// larger than some bound.
class AllocationProbe {
 public:
  AllocationProbe();
  ~AllocationProbe();
  AllocationProbe(const AllocationProbe&) = delete;
  AllocationProbe& operator=(const AllocationProbe&) = delete;

  void record(std::int64_t numel);
  std::int64_t max_numel() const noexcept { return max_; }
  std::int64_t count() const noexcept { return count_; }

 private:
  AllocationProbe* previous_;
  std::int64_t max_ = 0;
  std::int64_t count_ = 0;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<const T> data() const;
  // Writable view of a leaf's values (parameters, inputs). Writing into a
  // recorded intermediate would silently corrupt its gradients, so that throws.
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  Tensor grad_tensor() const;
  void zero_grad();

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  Tensor detach() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data().begin(), data().end());
    return Tensor<U>::from(shape(), std::move(out));
  }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  const Impl& checked() const;
  std::shared_ptr<Impl> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace garamost

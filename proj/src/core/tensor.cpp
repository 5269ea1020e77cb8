#include "garamost/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace garamost {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;
thread_local AllocationProbe* t_probe = nullptr;

}  // namespace

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

AllocationProbe::AllocationProbe() : previous_(t_probe) { t_probe = this; }
AllocationProbe::~AllocationProbe() { t_probe = previous_; }

void AllocationProbe::record(std::int64_t numel) {
  ++count_;
  if (numel > max_) max_ = numel;
  if (previous_) previous_->record(numel);
}

namespace detail {

void note_allocation(std::int64_t numel) {
  if (t_probe) t_probe->record(numel);
}

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
  if (grad.empty()) {
    note_allocation(static_cast<std::int64_t>(data.size()));
    grad.assign(data.size(), T(0));
  }
  return grad;
}

template <typename T>
static Tensor<T> make_result_impl(const char* op, Shape shape, std::vector<T> data,
                                  std::span<const Tensor<T>> inputs,
                                  std::function<void(std::span<const T>, const TensorImpl<T>&)> backward) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError(std::string(op) + ": result data does not match shape " + shape_str(shape));
  }
  for (const T& v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  note_allocation(static_cast<std::int64_t>(impl->data.size()));

  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) needs_grad = true;
    }
  }
  if (needs_grad) {
    auto node = std::make_shared<GradNode<T>>();
    node->op = op;
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) node->inputs.push_back(in.impl());
    }
    node->backward = std::move(backward);
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return Tensor<T>(std::move(impl));
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(std::span<const T>, const TensorImpl<T>&)> backward) {
  return make_result_impl<T>(op, std::move(shape), std::move(data),
                             std::span<const Tensor<T>>(inputs.begin(), inputs.size()), std::move(backward));
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(std::span<const T>, const TensorImpl<T>&)> backward) {
  return make_result_impl<T>(op, std::move(shape), std::move(data), std::span<const Tensor<T>>(inputs),
                             std::move(backward));
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template Tensor<float> make_result(const char*, Shape, std::vector<float>, std::initializer_list<Tensor<float>>,
                                   std::function<void(std::span<const float>, const TensorImpl<float>&)>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>, std::initializer_list<Tensor<double>>,
                                    std::function<void(std::span<const double>, const TensorImpl<double>&)>);
template Tensor<float> make_result(const char*, Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(std::span<const float>, const TensorImpl<float>&)>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(std::span<const double>, const TensorImpl<double>&)>);

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values do not fill shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  detail::note_allocation(static_cast<std::int64_t>(impl->data.size()));
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const typename Tensor<T>::Impl& Tensor<T>::checked() const {
  if (!impl_) throw std::logic_error("use of an undefined Tensor");
  return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  return static_cast<std::int64_t>(checked().data.size());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  checked();
  if (impl_->node) throw std::logic_error("mutable_data() on a recorded intermediate tensor");
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return checked().data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at(): index rank mismatch for shape " + shape_str(s));
  std::int64_t flat = 0;
  std::size_t a = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[a]) throw ShapeError("at(): index out of range for shape " + shape_str(s));
    flat = flat * s[a] + i;
    ++a;
  }
  return checked().data[static_cast<std::size_t>(flat)];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  checked();
  if (impl_->node) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return checked().node == nullptr;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !checked().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw std::logic_error("grad() requested but no gradient is present");
  return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!has_grad()) throw std::logic_error("mutable_grad() requested but no gradient is present");
  return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
  auto g = grad();
  return from(shape(), std::vector<T>(g.begin(), g.end()));
}

template <typename T>
void Tensor<T>::zero_grad() {
  checked();
  impl_->grad.clear();
}

template <typename T>
void Tensor<T>::backward() const {
  const auto& root = checked();
  if (root.data.size() != 1) throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
  if (!root.requires_grad) throw std::logic_error("backward() on a loss that does not depend on any tracked tensor");

  // Iterative DFS post-order; a node seen again while still on the stack is a cycle.
  enum class Mark { kActive, kDone };
  std::unordered_map<const Impl*, Mark> marks;
  std::vector<Impl*> order;
  struct Frame {
    Impl* impl;
    std::size_t next;
  };
  std::vector<Frame> stack{{impl_.get(), 0}};
  marks[impl_.get()] = Mark::kActive;
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto* node = top.impl->node.get();
    if (node && top.next < node->inputs.size()) {
      Impl* child = node->inputs[top.next++].get();
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks[child] = Mark::kActive;
        stack.push_back({child, 0});
      } else if (it->second == Mark::kActive) {
        throw std::logic_error("backward(): cycle in the recorded graph");
      }
      continue;
    }
    marks[top.impl] = Mark::kDone;
    order.push_back(top.impl);
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* impl = *it;
    if (!impl->node) continue;
    if (!impl->grad.empty()) {
      for (const T& g : impl->grad) {
        if (!std::isfinite(g)) throw NumericError("backward(): non-finite gradient flowing into " + impl->node->op);
      }
      impl->node->backward(impl->grad, *impl);
    }
    std::vector<T>().swap(impl->grad);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), std::vector<T>(data().begin(), data().end()));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace garamost

#include "cobnet/tensor.hpp"

#include <algorithm>
#include <cstdlib>
#include <new>
#include <sstream>

#include "cobnet/error.hpp"

namespace cobnet {

namespace detail {

// Storage starts on a 64-byte boundary so vectorised kernels split their
// reductions identically on every run, independent of heap addresses.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes == 0 ? kAlign : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

struct TensorImpl {
  Shape shape;
  Storage data;
  Storage grad;  // empty means "no gradient yet"
  bool requires_grad = false;
  bool leaf = true;
};
}  // namespace detail

namespace {
thread_local Graph* active_graph = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor rank must be at least 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(values.begin(), values.end());
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, std::vector<double>{value}, requires_grad);
}

detail::TensorImpl& Tensor::checked() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<const double> Tensor::data() const { return checked().data; }
std::span<double> Tensor::mutable_data() { return checked().data; }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on a tensor with " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  const auto& s = shape();
  return impl_->data[(c * s[1] + y) * s[2] + x];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

void Tensor::set_requires_grad(bool enabled) {
  auto& impl = checked();
  impl.requires_grad = enabled;
  if (!enabled) impl.grad.clear();
}

bool Tensor::is_leaf() const { return checked().leaf; }
bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  auto& impl = checked();
  if (!impl.requires_grad) throw UsageError("gradient requested for a tensor that does not require grad");
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() {
  auto& impl = checked();
  if (impl.requires_grad) impl.grad.assign(impl.data.size(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<double>(impl_->data.begin(), impl_->data.end()), false);
}

Tensor Tensor::clone() const {
  return Tensor(shape(), std::vector<double>(impl_->data.begin(), impl_->data.end()), impl_->requires_grad);
}

Graph::~Graph() {
  if (active_graph == this) active_graph = nullptr;
}

Graph* Graph::active() { return active_graph; }

bool Graph::record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  Graph* graph = active_graph;
  if (!graph) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  output.impl_->requires_grad = true;
  output.impl_->leaf = false;
  graph->nodes_.push_back(Node{std::move(inputs), output, std::move(fn)});
  return true;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw UsageError("backward on a tensor that does not require grad");
  for (auto& node : nodes_) node.output.impl_->grad.clear();
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn(it->output.impl_->grad);
  }
}

void Graph::clear() { nodes_.clear(); }

Graph::Scope::Scope(Graph& graph) : previous_(active_graph) { active_graph = &graph; }
Graph::Scope::~Scope() { active_graph = previous_; }

Graph::NoGrad::NoGrad() : previous_(active_graph) { active_graph = nullptr; }
Graph::NoGrad::~NoGrad() { active_graph = previous_; }

void backward(const Tensor& loss) {
  Graph* graph = Graph::active();
  if (!graph) throw UsageError("backward called with no active graph");
  graph->backward(loss);
}

}  // namespace cobnet

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cobnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// Dense row-major array of doubles with optional gradient tracking.
///
/// A Tensor is a shared handle: copies refer to the same storage, which is
/// what lets the graph accumulate gradients into parameters that are held
/// elsewhere. Values are treated as immutable once an operation has consumed
/// them; only parameters are updated in place, between graph evaluations.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  // rank-3 element access (channel, row, column)
  double at(std::size_t c, std::size_t y, std::size_t x) const;

  bool requires_grad() const;
  void set_requires_grad(bool enabled);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Graph;
  std::shared_ptr<detail::TensorImpl> impl_;
  detail::TensorImpl& checked() const;
};

/// Ordered record of the differentiable operations executed while the graph
/// is active on the current thread. Recording order is a topological order,
/// so reverse replay visits every operation exactly once.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  // Records output = f(inputs) if a graph is active and any input requires
  // grad. Returns true when recorded (the output then requires grad).
  static bool record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  static Graph* active();

  // Makes a graph the active recorder of this thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Graph& graph);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* previous_;
  };

  // Suspends recording for its lifetime.
  class NoGrad {
   public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Graph* previous_;
  };

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

// Back-propagates through the graph active on this thread.
void backward(const Tensor& loss);

}  // namespace cobnet

#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tenc/error.hpp"

namespace tenc::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class Graph;

namespace detail {

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows into the node
  bool requires_grad = false;
  std::uint64_t graph_id = 0;  // 0 for leaves and constants
  std::size_t index = kNoNode;
};

using NodePtr = std::shared_ptr<Node>;

// Gradient buffer of a node, allocated on first use. Null when the node does
// not take part in differentiation.
inline double* grad_buffer(Node& n) {
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

inline std::uint64_t next_graph_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline thread_local Graph* active_graph = nullptr;

}  // namespace detail

// Dense row-major f64 tensor. Copies share the underlying node; use clone()
// for an independent value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), false);
  }
  static Tensor parameter(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), true);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(numel_of(shape), 0.0);
    return make(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return make(Shape{1}, std::vector<double>{v}, requires_grad);
  }
  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    Shape s{values.size()};
    return make(std::move(s), std::move(values), requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access. Only meaningful for leaves (optimizer updates,
  // finite-difference probes); writing into a recorded intermediate
  // invalidates its graph.
  std::span<double> mutable_values() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }

  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->graph_id == 0; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Same values, no graph history, not differentiable.
  Tensor detach() const { return constant(shape(), node_->value); }
  // Independent leaf copy preserving requires_grad.
  Tensor clone() const { return make(shape(), node_->value, node_->requires_grad && is_leaf()); }

  const detail::NodePtr& node() const { return node_; }

 private:
  static Tensor make(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel_of(shape) != values.size()) {
      throw ShapeError("shape " + to_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("zero-sized dimension in " + to_string(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  detail::NodePtr node_;
};

// Define-by-run tape. Operations executed while a GraphScope for this graph
// is active, and that have at least one differentiable input, are appended in
// execution order; backward() replays them in exact reverse order.
class Graph {
 public:
  struct Record {
    const char* op;
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    std::function<void(detail::Node&)> backward;
  };

  Graph() : id_(detail::next_graph_id()) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph() {
    if (detail::active_graph == this) detail::active_graph = nullptr;
  }

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return tape_.size(); }
  bool consumed() const noexcept { return consumed_; }
  const std::vector<Record>& records() const noexcept { return tape_; }

  // Drops the tape; tensors recorded before the reset become stale.
  void reset() {
    tape_.clear();
    consumed_ = false;
    id_ = detail::next_graph_id();
  }

  void append(Record r) {
    if (consumed_) throw Error("autodiff", "recording onto a graph that was already differentiated");
    r.output->graph_id = id_;
    r.output->index = tape_.size();
    tape_.push_back(std::move(r));
  }

  void backward(const Tensor& root) {
    if (!root.defined() || root.numel() != 1) {
      throw Error("autodiff", "backward root must be a scalar");
    }
    const auto& rn = *root.node();
    if (rn.graph_id != id_ || rn.index >= tape_.size() || tape_[rn.index].output != root.node()) {
      throw Error("autodiff", "backward root was not produced on this graph (stale graph)");
    }
    if (consumed_) throw Error("autodiff", "backward called twice on the same graph without reset");
    consumed_ = true;
    root.node()->grad.assign(1, 1.0);
    for (std::size_t i = rn.index + 1; i-- > 0;) {
      Record& r = tape_[i];
      if (r.output->grad.empty()) continue;
      r.backward(*r.output);
    }
  }

 private:
  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<Record> tape_;
};

// Makes `g` the recording target for the current thread.
class GraphScope {
 public:
  explicit GraphScope(Graph& g) : prev_(detail::active_graph) { detail::active_graph = &g; }
  ~GraphScope() { detail::active_graph = prev_; }
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* prev_;
};

// Suspends recording (evaluation passes, finite-difference probes).
class NoGradScope {
 public:
  NoGradScope() : prev_(detail::active_graph) { detail::active_graph = nullptr; }
  ~NoGradScope() { detail::active_graph = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Graph* prev_;
};

inline void backward(Graph& graph, const Tensor& root) { graph.backward(root); }

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& v) {
  // x * 0 is NaN exactly when x is NaN or infinite; the sum vectorizes.
  double acc = 0.0;
  for (double x : v) acc += x * 0.0;
  if (acc != acc) throw NumericError("autodiff", std::string("non-finite output in ") + op);
}

// Builds the output tensor of a primitive and, when recording is active and
// an input is differentiable, appends it to the active graph.
template <class Backward>
Tensor emit(const char* op, std::vector<NodePtr> inputs, Shape shape, std::vector<double> value,
            Backward&& bw) {
  check_finite(op, value);
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  Graph* g = active_graph;
  bool differentiable = false;
  for (const auto& in : inputs) differentiable = differentiable || in->requires_grad;
  if (g != nullptr && differentiable) {
    for (const auto& in : inputs) {
      if (in->graph_id != 0 && in->graph_id != g->id()) {
        throw Error("autodiff", std::string(op) + ": input belongs to a different or stale graph");
      }
    }
    out->requires_grad = true;
    g->append(Graph::Record{op, std::move(inputs), out, std::function<void(Node&)>(std::forward<Backward>(bw))});
  }
  return Tensor(std::move(out));
}

}  // namespace detail
}  // namespace tenc::ad

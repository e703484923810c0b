#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mca/common.hpp"

namespace mca {

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;        // allocated lazily on first accumulation
  bool requires_grad = false;
  bool backward_done = false;    // set on the root after backward()
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates into parents' grads given this node's grad.
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return data.size(); }

  std::vector<real>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), real(0));
    return grad;
  }
};

}  // namespace detail

// Dense N-d tensor with reverse-mode autodiff. Copies are shallow: two
// Tensors may share the same node, like a shared_ptr. Feature maps use
// N x C x H x W layout.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), real(0), requires_grad);
  }

  static Tensor filled(Shape shape, real value, bool requires_grad = false) {
    auto n = std::make_shared<detail::Node>();
    n->data.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<real> data,
                          bool requires_grad = false) {
    MCA_CHECK(data.size() == shape_numel(shape), "from_data: ", data.size(),
              " values for shape ", shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(real v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  // Fan-in scaled zero-mean normal, for conv/linear weights of ReLU stacks.
  static Tensor randn_fanin(Shape shape, std::size_t fan_in,
                            std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
    std::vector<real> d(shape_numel(shape));
    for (real& v : d) v = real(dist(rng));
    return from_data(std::move(shape), std::move(d), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  const std::vector<real>& data() const { return node_->data; }
  std::vector<real>& data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<real>& grad() const {
    MCA_CHECK(has_grad(), "grad accessed before backward");
    return node_->grad;
  }
  std::vector<real>& grad_mut() { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
  }

  real item() const {
    MCA_CHECK(numel() == 1, "item() on non-scalar tensor ", shape_str(shape()));
    return node_->data[0];
  }

  real at(std::size_t i) const { return node_->data[i]; }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Runs reverse-mode accumulation from this scalar root. Each leaf with
  // requires_grad receives dRoot/dLeaf added into its grad buffer.
  void backward() const {
    MCA_CHECK(node_ != nullptr, "backward on undefined tensor");
    MCA_CHECK(numel() == 1, "backward requires a scalar root, got ",
              shape_str(shape()));
    MCA_CHECK(!node_->backward_done,
              "backward called twice on the same recorded graph");
    MCA_CHECK(node_->backward_fn || node_->requires_grad,
              "backward on a detached graph: root records no operations");
    node_->backward_done = true;

    // Reverse topological order over the recorded DAG.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::function<void(detail::Node*)> visit = [&](detail::Node* n) {
      if (seen.count(n)) return;
      seen.insert(n);
      for (auto& p : n->parents) visit(p.get());
      order.push_back(n);
    };
    visit(node_.get());

    node_->ensure_grad()[0] += real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const std::vector<real>& data, const char* op) {
  for (real v : data)
    if (!std::isfinite(v)) fail("non-finite value produced by ", op);
}

// Builds a result node wired into the graph. backward_fn may be empty for
// non-differentiable ops.
inline Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                          std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward_fn) {
  check_finite(data, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool any_grad = false;
  for (const Tensor& t : inputs) {
    if (t.node()->requires_grad || t.node()->backward_fn) any_grad = true;
  }
  if (any_grad) {
    n->requires_grad = true;
    for (const Tensor& t : inputs) n->parents.push_back(t.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace mca

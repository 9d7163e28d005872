#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "partmatch/tensor.hpp"

namespace partmatch {

struct Node;

/// Propagates the gradient stored on `self` into its parents.
using BackwardFn = std::function<void(Node& self)>;

/// One vertex of the reverse-mode graph.
struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::string name;  // set for named leaves (parameters)
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  /// Grad buffer sized to value, allocated on first use.
  std::vector<double>& grad_buffer();
};

/// Handle to a differentiable tensor: value, requires_grad flag and an
/// optional gradient buffer of the same length.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false, std::string name = {});
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  /// Gradient, zeros when nothing has flowed in.
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Records an interior node. When no parent requires grad the result is a
/// constant and `backward` is dropped.
Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward);

/// Constant view of `v`: same value, cut from the graph.
Var detach(const Var& v);

/// Reverse-mode accumulation from a scalar. Throws ShapeError for
/// non-scalar input and NumericError naming the first leaf whose gradient is
/// non-finite.
void backward(const Var& loss);

/// Trainable (or frozen) named leaf.
struct Parameter {
  std::string name;
  Var var;
  bool frozen = false;
};

/// Ordered, name-unique parameter collection.
class ParameterStore {
 public:
  Var add(std::string name, Tensor init, bool frozen = false);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter*> trainable();
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::size_t elements_checked = 0;
  std::vector<GradCheckEntry> entries;  // sorted worst first
};

/// Compares reverse-mode partials against central differences
/// (f(x+h) - f(x-h)) / 2h for every element of `params`. The relative error
/// of an element is |a - n| / max(|a|, |n|, 1e-6).
///
/// `forward` must be a pure function of the parameter values. Frozen
/// parameters are skipped.
GradCheckReport finite_diff_check(const std::function<Var()>& forward,
                                  std::span<Parameter* const> params, double h = 1e-5,
                                  double tolerance = 1e-4);

}  // namespace partmatch

#include "partmatch/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "partmatch/errors.hpp"

namespace partmatch {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad, std::string name)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->name = std::move(name);
}

std::vector<double> Var::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Var& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Var detach(const Var& v) { return Var(v.value()); }

void backward(const Var& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  visited.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->parents.empty()) node->grad.clear();
  }
  loss.node().grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }

  for (Node* node : order) {
    if (!node->parents.empty()) continue;
    for (double g : node->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient for parameter '" +
                           (node->name.empty() ? std::string("<unnamed>") : node->name) + "'");
      }
    }
  }
}

Var ParameterStore::add(std::string name, Tensor init, bool frozen) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Var var(std::move(init), !frozen, name);
  params_.push_back(Parameter{std::move(name), std::move(var), frozen});
  return params_.back().var;
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (!p.frozen) out.push_back(&p);
  }
  return out;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!p.frozen) n += p.var.size();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

GradCheckReport finite_diff_check(const std::function<Var()>& forward,
                                  std::span<Parameter* const> params, double h,
                                  double tolerance) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw ConfigError("finite-difference step must lie in [1e-6, 1e-4]");

  for (Parameter* p : params) p->var.zero_grad();
  Var loss = forward();
  backward(loss);

  GradCheckReport report;
  report.tolerance = tolerance;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    const std::vector<double> analytic = p->var.grad();
    GradCheckEntry entry;
    entry.name = p->name;
    auto& values = p->var.mutable_value().data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = forward().value().item();
      values[i] = saved - h;
      const double minus = forward().value().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (!std::isfinite(rel)) {
        throw NumericError("non-finite finite-difference result for '" + p->name + "'");
      }
      if (rel >= entry.max_rel_error) {
        if (rel > entry.max_rel_error || i == 0) {
          entry.max_rel_error = rel;
          entry.worst_index = i;
          entry.analytic = analytic[i];
          entry.numeric = numeric;
        }
      }
      ++report.elements_checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const GradCheckEntry& a, const GradCheckEntry& b) {
                     return a.max_rel_error > b.max_rel_error;
                   });
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace partmatch

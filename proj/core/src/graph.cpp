#include "lkreg/graph.hpp"

namespace lkreg {

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  n->name = std::move(name);
  if (requires_grad) n->ensure_grad();
  return n;
}

template <class T>
Var<T> make_constant(Tensor<T> value, std::string name) {
  return make_leaf(std::move(value), false, std::move(name));
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<Var<T>> parents,
                        std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backward = std::move(backward);
  for (const auto& p : n->parents)
    if (p && p->needs_grad) n->needs_grad = true;
  tape_.push_back(n);
  consumed_ = false;
  return n;
}

template <class T>
void Graph<T>::backward(const Var<T>& loss) {
  if (!loss) throw usage_error("backward: null loss");
  if (loss->value.numel() != 1)
    throw usage_error("backward: loss must be scalar, got shape " +
                      shape_string(loss->value.shape));
  if (tape_.empty() && consumed_)
    throw usage_error(
        "backward: graph already consumed; re-record the forward pass");
  loss->accumulate(Tensor<T>::scalar(T(1)));
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && n.has_grad() && n.needs_grad) n.backward(n);
    // Release saved context and intermediate grads as we go.
    n.backward = nullptr;
    n.parents.clear();
    n.grad = Tensor<T>();
  }
  tape_.clear();
  consumed_ = true;
}

template <class T>
void Graph<T>::clear() {
  for (auto& n : tape_) {
    n->backward = nullptr;
    n->parents.clear();
  }
  tape_.clear();
  consumed_ = false;
}

template <class T>
Var<T> op_result(Graph<T>* g, Tensor<T> value, std::vector<Var<T>> parents,
                 const std::function<void(Node<T>&)>& backward,
                 const char* what) {
  if (finite_checks_enabled()) check_finite(value, what);
  bool needs = false;
  for (const auto& p : parents)
    if (p && p->needs_grad) needs = true;
  if (g != nullptr && needs)
    return g->record(std::move(value), std::move(parents), backward);
  return make_constant(std::move(value));
}

template Var<float> make_leaf(Tensor<float>, bool, std::string);
template Var<double> make_leaf(Tensor<double>, bool, std::string);
template Var<float> make_constant(Tensor<float>, std::string);
template Var<double> make_constant(Tensor<double>, std::string);
template struct Node<float>;
template struct Node<double>;
template class Graph<float>;
template class Graph<double>;
template Var<float> op_result(Graph<float>*, Tensor<float>,
                              std::vector<Var<float>>,
                              const std::function<void(Node<float>&)>&,
                              const char*);
template Var<double> op_result(Graph<double>*, Tensor<double>,
                               std::vector<Var<double>>,
                               const std::function<void(Node<double>&)>&,
                               const char*);

}  // namespace lkreg

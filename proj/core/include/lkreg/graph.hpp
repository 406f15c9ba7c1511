#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lkreg/tensor.hpp"

namespace lkreg {

// Reverse-mode tape. Operations record themselves in execution order, so
// walking the tape backwards is a valid reverse topological order by
// construction. A Graph is confined to one logical training thread.

template <class T>
struct Node;

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // lies on a path to a requires_grad leaf
  std::string name;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backward;

  bool has_grad() const { return !grad.data.empty(); }

  void ensure_grad() {
    if (!has_grad()) grad = Tensor<T>::zeros(value.shape);
  }

  void zero_grad() {
    ensure_grad();
    std::fill(grad.data.begin(), grad.data.end(), T(0));
  }

  void accumulate(const Tensor<T>& g) {
    if (g.shape != value.shape)
      throw usage_error("grad accumulation: shape mismatch for node '" + name +
                        "'");
    if (!has_grad()) {
      grad = g;
      return;
    }
    for (std::size_t i = 0; i < grad.data.size(); ++i)
      grad.data[i] += g.data[i];
  }

  void accumulate(Tensor<T>&& g) {
    if (g.shape != value.shape)
      throw usage_error("grad accumulation: shape mismatch for node '" + name +
                        "'");
    if (!has_grad()) {
      grad = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < grad.data.size(); ++i)
      grad.data[i] += g.data[i];
  }
};

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad, std::string name = {});

template <class T>
Var<T> make_constant(Tensor<T> value, std::string name = {});

template <class T>
class Graph {
 public:
  // Records a computed node. `backward` reads node.grad and accumulates
  // into the parents; it may be empty for detached results.
  Var<T> record(Tensor<T> value, std::vector<Var<T>> parents,
                std::function<void(Node<T>&)> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse
  // recording order. Populates grads of every requires_grad leaf on the
  // path, then clears the tape; a second call without re-recording is a
  // usage error. The loss must be scalar.
  void backward(const Var<T>& loss);

  std::size_t size() const { return tape_.size(); }
  void clear();

 private:
  std::vector<Var<T>> tape_;
  bool consumed_ = false;
};

// Helper used by every op: records when a tape is supplied and any input
// needs gradients, otherwise returns a detached node.
template <class T>
Var<T> op_result(Graph<T>* g, Tensor<T> value, std::vector<Var<T>> parents,
                 const std::function<void(Node<T>&)>& backward,
                 const char* what);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace lkreg

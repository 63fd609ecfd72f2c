#include "gcnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace gcnet {

namespace {
std::atomic<std::uint64_t> g_node_counter{0};
thread_local bool g_no_grad = false;
}  // namespace

std::uint64_t next_node_id() { return ++g_node_counter; }

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw std::invalid_argument("backward: empty loss handle");
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{loss.node()};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& in : n->inputs)
      if (in->requires_grad) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](const Node<T>* a, const Node<T>* b) {
    return a->id > b->id;
  });

  loss.node()->grad_buffer().fill(T(1));
  for (Node<T>* n : order)
    if (n->backward && !n->grad.empty()) n->backward(*n);
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace gcnet

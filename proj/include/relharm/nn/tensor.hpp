#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace relharm::nn {

/// NCHW shape. Vectors and matrices use trailing ones.
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::size_t numel() const { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) +
               "]";
    }
};

class ShapeMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void expect_shape(const Shape& got, const Shape& want, const char* where) {
    if (!(got == want)) throw ShapeMismatch(std::string(where) + ": expected " + want.str() + ", got " + got.str());
}

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward;

    std::vector<T>& grad_buffer() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape s) { return from(s, std::vector<T>(s.numel(), T(0))); }
    static Tensor from(Shape s, std::vector<T> values) {
        if (values.size() != s.numel()) throw ShapeMismatch("Tensor::from: value count does not match " + s.str());
        auto n = std::make_shared<Node<T>>();
        n->shape = s;
        n->value = std::move(values);
        return Tensor(std::move(n));
    }
    /// Leaf that accumulates gradients (a trainable weight).
    static Tensor parameter(Shape s, std::vector<T> values) {
        Tensor t = from(s, std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    const std::vector<T>& values() const { return node_->value; }
    std::vector<T>& values() { return node_->value; }
    const T* data() const { return node_->value.data(); }
    T* data() { return node_->value.data(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    // Handle semantics: gradients live in the shared node.
    std::vector<T>& grad() const { return node_->grad_buffer(); }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    void zero_grad() const { node_->grad.clear(); }
    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    /// Same storage, different shape (element count must match). Gradients flow
    /// straight through.
    Tensor reshape(Shape s) const;

private:
    std::shared_ptr<Node<T>> node_;
};

/// Creates an op result. When recording is on and any input needs gradients,
/// the result keeps its inputs alive and stores `backward`, which receives the
/// result node.
template <class T, class Fn>
Tensor<T> make_result(Shape s, std::vector<T> value, std::initializer_list<Tensor<T>> inputs, Fn&& backward) {
    auto out = std::make_shared<Node<T>>();
    out->shape = s;
    out->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const Tensor<T>& in : inputs) any = any || (in.defined() && in.requires_grad());
        if (any) {
            out->requires_grad = true;
            for (const Tensor<T>& in : inputs)
                if (in.defined()) out->parents.push_back(in.node_ptr());
            Node<T>* self = out.get();
            out->backward = [self, fn = std::forward<Fn>(backward)]() mutable { fn(*self); };
        }
    }
    return Tensor<T>(std::move(out));
}

template <class T>
Tensor<T> Tensor<T>::reshape(Shape s) const {
    if (s.numel() != numel()) throw ShapeMismatch("reshape: " + shape().str() + " -> " + s.str());
    Tensor<T> in = *this;
    return make_result<T>(s, values(), {in}, [in](Node<T>& self) mutable {
        if (!in.requires_grad()) return;
        auto& g = in.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// Reverse-mode sweep from a scalar. Gradients accumulate into every
/// reachable node that requires them.
template <class T>
void backward(const Tensor<T>& root) {
    if (root.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!root.requires_grad()) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward();
    }
}

}  // namespace relharm::nn

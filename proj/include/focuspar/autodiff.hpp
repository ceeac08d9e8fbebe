#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "focuspar/matrix.hpp"

namespace focuspar {

/// A named trainable array. Gradients accumulate into `grad` on Tape::backward.
template <class T>
struct Parameter {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;

    Parameter(std::string n, Matrix<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
    void zero_grad() { grad.fill(T(0)); }
};

/// Ordered registry of parameters. Insertion order is the checkpoint order.
template <class T>
class ParamStore {
public:
    Parameter<T>& add(const std::string& name, Matrix<T> value) {
        require(!index_.contains(name), "duplicate parameter name: " + name);
        index_[name] = params_.size();
        params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value)));
        return *params_.back();
    }

    Parameter<T>& get(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter: " + name);
        return *params_[it->second];
    }
    const Parameter<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter: " + name);
        return *params_[it->second];
    }
    bool contains(const std::string& name) const { return index_.contains(name); }

    std::size_t size() const noexcept { return params_.size(); }
    Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }
    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::uint32_t id = 0;

    const Matrix<T>& value() const { return tape->value(*this); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    T item() const { return value()[0]; }
};

/// Reverse-mode tape over matrix-valued nodes.
///
/// Ops evaluate eagerly and record a closure that maps the output gradient to
/// input gradients. Nodes that do not depend on any parameter or input leaf
/// carry no closure. With grad disabled nothing but values is kept.
template <class T>
class Tape {
public:
    using BackwardFn =
        std::function<void(Tape&, const Matrix<T>& out_value, const Matrix<T>& out_grad)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

    /// Leaf whose gradient is kept on the tape (read it back with grad()).
    Var<T> input(Matrix<T> value) { return push(std::move(value), grad_enabled_, nullptr); }

    /// Leaf bound to a parameter; one node per parameter per tape.
    Var<T> param(Parameter<T>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return Var<T>{this, it->second};
        Var<T> v = push(p.value, grad_enabled_, nullptr);
        param_nodes_.emplace(&p, v.id);
        bound_.emplace_back(&p, v.id);
        return v;
    }

    /// Records an op result. `fn` is dropped when no input needs a gradient.
    Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || needs_grad(in);
        return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
    }
    Var<T> record(Matrix<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || needs_grad(in);
        return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
    }

    const Matrix<T>& value(Var<T> v) const { return nodes_[v.id].value; }
    bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

    /// Gradient buffer of `v`, allocated (zeroed) on first touch.
    Matrix<T>& grad(Var<T> v) {
        Node& n = nodes_[v.id];
        if (n.grad.empty() && !n.value.empty()) n.grad = Matrix<T>(n.value.rows(), n.value.cols());
        return n.grad;
    }
    bool has_grad(Var<T> v) const { return !nodes_[v.id].grad.empty(); }

    /// Backpropagates d(root)/d(.) for a 1×1 root.
    void backward(Var<T> root) {
        require(root.value().size() == 1, "backward: root must be a scalar");
        Matrix<T> seed(1, 1, T(1));
        backward({{root, seed}});
    }

    /// Backpropagates from several seeded nodes at once.
    void backward(const std::vector<std::pair<Var<T>, Matrix<T>>>& seeds) {
        require(grad_enabled_, "backward on a tape without gradients");
        std::uint32_t top = 0;
        for (const auto& [v, g] : seeds) {
            require(g.same_shape(v.value()), "backward: seed shape mismatch");
            if (!needs_grad(v)) continue;
            Matrix<T>& dst = grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            top = std::max(top, v.id + 1);
        }
        for (std::uint32_t i = top; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            n.backward(*this, n.value, n.grad);
        }
        for (auto& [p, id] : bound_) {
            const Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            for (std::size_t k = 0; k < n.grad.size(); ++k) p->grad[k] += n.grad[k];
        }
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        BackwardFn backward;
        bool needs_grad = false;
    };

    Var<T> push(Matrix<T> value, bool needs, BackwardFn fn) {
        nodes_.push_back(Node{std::move(value), {}, grad_enabled_ ? std::move(fn) : nullptr,
                              grad_enabled_ && needs});
        return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    bool grad_enabled_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter<T>*, std::uint32_t> param_nodes_;
    std::vector<std::pair<Parameter<T>*, std::uint32_t>> bound_;
};

}  // namespace focuspar

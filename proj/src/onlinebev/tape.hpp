#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>

#include "onlinebev/params.hpp"
#include "onlinebev/tensor.hpp"

namespace obev {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
public:
    Var() = default;

    bool valid() const noexcept { return tape_ != nullptr; }
    int id() const noexcept { return id_; }
    Tape& tape() const { return *tape_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
// so the reverse of insertion order is a valid topological order for the
// backward sweep. Values are never mutated after recording.
class Tape {
public:
    // Receives the gradient of the node's output and accumulates into the
    // gradients of its inputs via grad_of().
    using Backward = std::function<void(Tape&, const Tensor&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value);
    // Binds a parameter; repeated calls with the same name return the same node.
    // All parameters of one tape must come from one store.
    Var param(const ParamStore& store, std::string_view name);
    // Same value, no gradient path to the input.
    Var detach(Var v);

    // Records an op output. The backward function is kept only when at least
    // one input requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    // Zero-initialised on first access. Only call for nodes that require grad.
    Tensor& grad_of(Var v);

    void backward(Var loss);
    // Gradient after backward(); zero tensor when nothing flowed into v.
    Tensor grad(Var v) const;
    // Adds the gradients of every bound parameter into store.grad(name).
    void accumulate_into(ParamStore& store) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Backward backward;
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Node n);

    std::deque<Node> nodes_;
    std::map<std::string, int, std::less<>> bound_params_;
    const ParamStore* bound_store_ = nullptr;
};

}  // namespace obev

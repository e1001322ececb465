#include "onlinebev/tape.hpp"

#include "onlinebev/error.hpp"

namespace obev {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Tape::Node& Tape::node(Var v)
{
    if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
        throw Error("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id_)];
}

const Tape::Node& Tape::node(Var v) const
{
    if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
        throw Error("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id_)];
}

Var Tape::push(Node n)
{
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Tensor value)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::param(const ParamStore& store, std::string_view name)
{
    if (bound_store_ != nullptr && bound_store_ != &store) throw Error("tape already binds parameters of another store");
    bound_store_ = &store;
    if (auto it = bound_params_.find(name); it != bound_params_.end()) return Var(this, it->second);
    Var v = leaf(store.value(name));
    bound_params_.emplace(std::string(name), v.id_);
    return v;
}

Var Tape::detach(Var v)
{
    return constant(value(v));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward)
{
    Node n;
    n.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.valid() && requires_grad(in)) {
            n.requires_grad = true;
            break;
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward)
{
    Node n;
    n.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.valid() && requires_grad(in)) {
            n.requires_grad = true;
            break;
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad_of(Var v)
{
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss)
{
    Node& root = node(loss);
    if (root.value.size() != 1) {
        throw DimensionError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
    }
    if (!root.requires_grad) return;
    grad_of(loss).fill(1.0);
    for (int i = loss.id_; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, n.grad);
    }
}

Tensor Tape::grad(Var v) const
{
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Tape::accumulate_into(ParamStore& store) const
{
    for (const auto& [name, id] : bound_params_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad) continue;
        Tensor& g = store.grad(name);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
}

}  // namespace obev

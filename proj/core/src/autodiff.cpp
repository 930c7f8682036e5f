#include "paglab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace paglab {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": unsupported shape " + a.shape_string());
}

// Elementwise with scalar broadcast on either side.
template <class F>
Tensor broadcast_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (a.is_scalar()) {
        Tensor out(b.shape());
        const double av = a[0];
        for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(av, b[i]);
        return out;
    }
    if (b.is_scalar()) {
        Tensor out(a.shape());
        const double bv = b[0];
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], bv);
        return out;
    }
    shape_error(op, a, b);
}

Tensor k_add(const Tensor& a, const Tensor& b) {
    return broadcast_binary("add", a, b, [](double x, double y) { return x + y; });
}

Tensor k_mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary("mul", a, b, [](double x, double y) { return x * y; });
}

Tensor k_div(const Tensor& a, const Tensor& b) {
    return broadcast_binary("div", a, b, [](double x, double y) { return x / y; });
}

Tensor k_scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
    return out;
}

Tensor k_matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) shape_error("matmul", a, b);
    const std::size_t m = a.extent(0);
    const std::size_t n = a.extent(1);
    if (b.rank() == 1) {
        if (b.extent(0) != n) shape_error("matmul", a, b);
        Tensor out({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += a[i * n + k] * b[k];
            out[i] = acc;
        }
        return out;
    }
    if (b.rank() == 2) {
        if (b.extent(0) != n) shape_error("matmul", a, b);
        const std::size_t p = b.extent(1);
        Tensor out({m, p});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += a[i * n + k] * b[k * p + j];
                out[i * p + j] = acc;
            }
        }
        return out;
    }
    shape_error("matmul", a, b);
}

Tensor k_relu(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    return out;
}

Tensor k_gt_mask(const Tensor& a, double thr) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > thr ? 1.0 : 0.0;
    return out;
}

Tensor k_sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return Tensor::scalar(acc);
}

Tensor k_dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) shape_error("dot", a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return Tensor::scalar(acc);
}

Tensor k_norm(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
    return Tensor::scalar(std::sqrt(acc));
}

Tensor k_maxc(const Tensor& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > c ? a[i] : c;
    return out;
}

Tensor k_lse(const Tensor& a) {
    if (a.rank() != 1) shape_error("log_sum_exp", a);
    double m = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) m = std::max(m, a[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::exp(a[i] - m);
    return Tensor::scalar(m + std::log(acc));
}

Tensor k_index_select(const Tensor& a, std::size_t index) {
    if (a.rank() != 1) shape_error("index_select", a);
    if (index >= a.size()) {
        throw std::invalid_argument("index_select: index " + std::to_string(index) + " out of range for " +
                                    a.shape_string());
    }
    return Tensor::scalar(a[index]);
}

Tensor k_exp(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
    return out;
}

Tensor k_transpose(const Tensor& a) {
    if (a.rank() != 2) shape_error("transpose", a);
    const std::size_t m = a.extent(0);
    const std::size_t n = a.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

Tensor onehot(std::size_t len, std::size_t index) {
    Tensor out({len});
    out[index] = 1.0;
    return out;
}

// Plays backward rules eagerly on plain tensors.
struct EagerEmitter {
    using Handle = Tensor;
    const Tape& tape;

    Handle input(NodeId id) const { return tape.value(id); }
    Handle constant(Tensor t) const { return t; }
    Handle add(const Handle& a, const Handle& b) const { return k_add(a, b); }
    Handle mul(const Handle& a, const Handle& b) const { return k_mul(a, b); }
    Handle div(const Handle& a, const Handle& b) const { return k_div(a, b); }
    Handle scale(const Handle& a, double c) const { return k_scale(a, c); }
    Handle matmul(const Handle& a, const Handle& b) const { return k_matmul(a, b); }
    Handle gt_mask(const Handle& a, double thr) const { return k_gt_mask(a, thr); }
    Handle sum(const Handle& a) const { return k_sum(a); }
    Handle exp(const Handle& a) const { return k_exp(a); }
    Handle transpose(const Handle& a) const { return k_transpose(a); }
    Handle max_with_const(const Handle& a, double c) const { return k_maxc(a, c); }
    Handle reshape(const Handle& a, std::vector<std::size_t> shape) const {
        return Tensor(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
    }
    Handle zeros_like_leaf(NodeId id) const { return Tensor::zeros(tape.value(id).shape()); }
};

// Appends backward rules to the tape, making the gradient differentiable.
struct RecordingEmitter {
    using Handle = NodeId;
    Tape& tape;

    Handle input(NodeId id) const { return id; }
    Handle constant(Tensor t) { return tape.constant(std::move(t)); }
    Handle add(Handle a, Handle b) { return tape.add(a, b); }
    Handle mul(Handle a, Handle b) { return tape.mul(a, b); }
    Handle div(Handle a, Handle b) { return tape.div(a, b); }
    Handle scale(Handle a, double c) { return tape.scale(a, c); }
    Handle matmul(Handle a, Handle b) { return tape.matmul(a, b); }
    Handle gt_mask(Handle a, double thr) { return tape.gt_mask(a, thr); }
    Handle sum(Handle a) { return tape.sum(a); }
    Handle exp(Handle a) { return tape.exp(a); }
    Handle transpose(Handle a) { return tape.transpose(a); }
    Handle max_with_const(Handle a, double c) { return tape.max_with_const(a, c); }
    Handle reshape(Handle a, std::vector<std::size_t> shape) { return tape.reshape(a, std::move(shape)); }
    Handle zeros_like_leaf(NodeId id) { return tape.constant(Tensor::zeros(tape.value(id).shape())); }
};

} // namespace

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::scale: return "scale";
        case OpKind::matmul: return "matmul";
        case OpKind::relu: return "relu";
        case OpKind::gt_mask: return "gt_mask";
        case OpKind::sum: return "sum";
        case OpKind::dot: return "dot";
        case OpKind::norm: return "norm";
        case OpKind::max_with_const: return "max_with_const";
        case OpKind::log_sum_exp: return "log_sum_exp";
        case OpKind::index_select: return "index_select";
        case OpKind::exp: return "exp";
        case OpKind::transpose: return "transpose";
        case OpKind::reshape: return "reshape";
    }
    return "?";
}

Tensor relu_backward_mask(const Tensor& pre_activation) { return k_gt_mask(pre_activation, 0.0); }

NodeId Tape::push(Node n) {
    if (nodes_.size() >= static_cast<std::size_t>(kNoInput)) throw std::runtime_error("tape: node limit exceeded");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_id(NodeId id, const char* what) const {
    if (id >= nodes_.size()) {
        throw std::invalid_argument(std::string(what) + ": node " + std::to_string(id) + " is not on this tape");
    }
}

NodeId Tape::leaf(const std::string& name, Tensor value, bool requires_grad) {
    if (roots_.count(name)) throw std::invalid_argument("tape: leaf '" + name + "' already registered");
    Node n;
    n.op = OpKind::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    NodeId id = push(std::move(n));
    roots_[name] = id;
    return id;
}

NodeId Tape::constant(Tensor value) {
    Node n;
    n.op = OpKind::leaf;
    n.requires_grad = false;
    n.value = std::move(value);
    return push(std::move(n));
}

Tensor Tape::compute(const Node& n) const {
    switch (n.op) {
        case OpKind::leaf: return n.value;
        case OpKind::add: return k_add(nodes_[n.a].value, nodes_[n.b].value);
        case OpKind::mul: return k_mul(nodes_[n.a].value, nodes_[n.b].value);
        case OpKind::div: return k_div(nodes_[n.a].value, nodes_[n.b].value);
        case OpKind::scale: return k_scale(nodes_[n.a].value, n.attr);
        case OpKind::matmul: return k_matmul(nodes_[n.a].value, nodes_[n.b].value);
        case OpKind::relu: return k_relu(nodes_[n.a].value);
        case OpKind::gt_mask: return k_gt_mask(nodes_[n.a].value, n.attr);
        case OpKind::sum: return k_sum(nodes_[n.a].value);
        case OpKind::dot: return k_dot(nodes_[n.a].value, nodes_[n.b].value);
        case OpKind::norm: return k_norm(nodes_[n.a].value);
        case OpKind::max_with_const: return k_maxc(nodes_[n.a].value, n.attr);
        case OpKind::log_sum_exp: return k_lse(nodes_[n.a].value);
        case OpKind::index_select: return k_index_select(nodes_[n.a].value, n.index);
        case OpKind::exp: return k_exp(nodes_[n.a].value);
        case OpKind::transpose: return k_transpose(nodes_[n.a].value);
        case OpKind::reshape: {
            const Tensor& in = nodes_[n.a].value;
            return Tensor(n.value.shape(), std::vector<double>(in.data().begin(), in.data().end()));
        }
    }
    throw std::logic_error("tape: unknown op");
}

NodeId Tape::binary(OpKind op, NodeId a, NodeId b) {
    check_id(a, op_name(op));
    check_id(b, op_name(op));
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.value = compute(n);
    return push(std::move(n));
}

NodeId Tape::unary(OpKind op, NodeId a, double attr, std::size_t index) {
    check_id(a, op_name(op));
    Node n;
    n.op = op;
    n.a = a;
    n.attr = attr;
    n.index = index;
    n.requires_grad = op == OpKind::gt_mask ? false : nodes_[a].requires_grad;
    n.value = compute(n);
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) { return binary(OpKind::add, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return binary(OpKind::mul, a, b); }
NodeId Tape::div(NodeId a, NodeId b) { return binary(OpKind::div, a, b); }
NodeId Tape::matmul(NodeId a, NodeId b) { return binary(OpKind::matmul, a, b); }
NodeId Tape::dot(NodeId a, NodeId b) { return binary(OpKind::dot, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }
NodeId Tape::scale(NodeId a, double c) { return unary(OpKind::scale, a, c); }
NodeId Tape::relu(NodeId a) { return unary(OpKind::relu, a); }
NodeId Tape::gt_mask(NodeId a, double threshold) { return unary(OpKind::gt_mask, a, threshold); }
NodeId Tape::sum(NodeId a) { return unary(OpKind::sum, a); }
NodeId Tape::norm(NodeId a) { return unary(OpKind::norm, a); }
NodeId Tape::max_with_const(NodeId a, double c) { return unary(OpKind::max_with_const, a, c); }
NodeId Tape::log_sum_exp(NodeId a) { return unary(OpKind::log_sum_exp, a); }
NodeId Tape::index_select(NodeId a, std::size_t index) { return unary(OpKind::index_select, a, 0.0, index); }
NodeId Tape::exp(NodeId a) { return unary(OpKind::exp, a); }
NodeId Tape::transpose(NodeId a) { return unary(OpKind::transpose, a); }

NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
    check_id(a, "reshape");
    std::size_t count = 1;
    for (std::size_t e : shape) count *= e;
    if (count != nodes_[a].value.size()) {
        throw std::invalid_argument("reshape: cannot view " + nodes_[a].value.shape_string() + " as " +
                                    shape_string(shape));
    }
    Node n;
    n.op = OpKind::reshape;
    n.a = a;
    n.requires_grad = nodes_[a].requires_grad;
    n.value = Tensor(std::move(shape),
                     std::vector<double>(nodes_[a].value.data().begin(), nodes_[a].value.data().end()));
    return push(std::move(n));
}

NodeId Tape::leaf_id(const std::string& name) const {
    auto it = roots_.find(name);
    if (it == roots_.end()) throw std::invalid_argument("tape: unknown leaf '" + name + "'");
    return it->second;
}

void Tape::set_leaf(const std::string& name, Tensor value) { set_leaf(leaf_id(name), std::move(value)); }

void Tape::set_leaf(NodeId id, Tensor value) {
    check_id(id, "set_leaf");
    Node& n = nodes_[id];
    if (n.op != OpKind::leaf) throw std::invalid_argument("set_leaf: node is not a leaf");
    if (!n.value.same_shape(value)) {
        throw std::invalid_argument("set_leaf: shape mismatch " + n.value.shape_string() + " vs " +
                                    value.shape_string());
    }
    n.value = std::move(value);
}

void Tape::replay() {
    for (Node& n : nodes_) {
        if (n.op == OpKind::leaf) continue;
        n.value = compute(n);
    }
}

Tensor Tape::forward(const std::map<std::string, Tensor>& leaves) {
    if (nodes_.empty()) throw std::invalid_argument("forward: empty tape");
    for (const auto& [name, id] : roots_) {
        auto it = leaves.find(name);
        if (it == leaves.end()) throw std::invalid_argument("forward: leaf '" + name + "' not bound");
        set_leaf(id, it->second);
    }
    for (const auto& [name, value] : leaves) {
        if (!roots_.count(name)) throw std::invalid_argument("forward: unknown leaf '" + name + "'");
    }
    replay();
    return nodes_.back().value;
}

template <class Emitter>
void Tape::run_backward(NodeId output, std::span<const NodeId> wrt, Emitter& em,
                        std::vector<typename Emitter::Handle>& adjoint, std::vector<char>& has_adjoint) const {
    using Handle = typename Emitter::Handle;
    check_id(output, "gradients");
    if (nodes_[output].value.size() != 1) {
        throw std::invalid_argument("gradients: output must be scalar, got shape " +
                                    nodes_[output].value.shape_string());
    }
    for (NodeId w : wrt) {
        check_id(w, "gradients");
        if (nodes_[w].op != OpKind::leaf) {
            throw std::invalid_argument("gradients: wrt node " + std::to_string(w) + " is not a leaf");
        }
    }

    const std::size_t n = nodes_.size();

    // reach[i]: node i depends on at least one wrt leaf. gt_mask is piecewise
    // constant, so dependence does not propagate through it.
    std::vector<char> reach(n, 0);
    for (NodeId w : wrt) reach[w] = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes_[i];
        if (nd.op == OpKind::leaf || nd.op == OpKind::gt_mask) continue;
        if ((nd.a != kNoInput && reach[nd.a]) || (nd.b != kNoInput && reach[nd.b])) reach[i] = 1;
    }

    // need[i]: output depends on node i.
    std::vector<char> need(n, 0);
    std::vector<NodeId> stack{output};
    need[output] = 1;
    while (!stack.empty()) {
        const Node& nd = nodes_[stack.back()];
        stack.pop_back();
        for (NodeId in : {nd.a, nd.b}) {
            if (in != kNoInput && !need[in]) {
                need[in] = 1;
                stack.push_back(in);
            }
        }
    }

    std::vector<char> active(n, 0);
    for (std::size_t i = 0; i < n; ++i) active[i] = reach[i] && need[i];

    adjoint.assign(n, Handle{});
    has_adjoint.assign(n, 0);
    if (!active[output]) return; // output does not depend on wrt: all-zero gradients

    adjoint[output] = em.constant(Tensor::scalar(1.0));
    has_adjoint[output] = 1;

    auto accumulate = [&](NodeId id, Handle h) {
        if (has_adjoint[id]) {
            adjoint[id] = em.add(adjoint[id], h);
        } else {
            adjoint[id] = std::move(h);
            has_adjoint[id] = 1;
        }
    };
    // Gradient of the scalar-broadcast side of an elementwise op.
    auto reduce_if_broadcast = [&](Handle h, std::size_t in_size, std::size_t out_size) {
        return in_size == 1 && out_size > 1 ? em.sum(h) : h;
    };

    for (std::size_t i = n; i-- > 0;) {
        const NodeId id = static_cast<NodeId>(i);
        if (!active[id] || !has_adjoint[id]) continue;
        // Snapshot metadata before emitting: recording growth may reallocate nodes_.
        const OpKind op = nodes_[id].op;
        const NodeId a = nodes_[id].a;
        const NodeId b = nodes_[id].b;
        const double attr = nodes_[id].attr;
        const std::size_t sel = nodes_[id].index;
        const std::size_t out_size = nodes_[id].value.size();
        const std::size_t a_size = a != kNoInput ? nodes_[a].value.size() : 0;
        const std::size_t b_size = b != kNoInput ? nodes_[b].value.size() : 0;
        const bool want_a = a != kNoInput && active[a];
        const bool want_b = b != kNoInput && active[b];
        const Handle u = adjoint[id];

        switch (op) {
            case OpKind::leaf:
                break;
            case OpKind::add:
                if (want_a) accumulate(a, reduce_if_broadcast(u, a_size, out_size));
                if (want_b) accumulate(b, reduce_if_broadcast(u, b_size, out_size));
                break;
            case OpKind::mul:
                if (want_a) accumulate(a, reduce_if_broadcast(em.mul(em.input(b), u), a_size, out_size));
                if (want_b) accumulate(b, reduce_if_broadcast(em.mul(em.input(a), u), b_size, out_size));
                break;
            case OpKind::div:
                if (want_a) accumulate(a, reduce_if_broadcast(em.div(u, em.input(b)), a_size, out_size));
                if (want_b) {
                    Handle b_sq = em.mul(em.input(b), em.input(b));
                    Handle t = em.mul(u, em.div(em.input(a), b_sq));
                    accumulate(b, reduce_if_broadcast(em.scale(t, -1.0), b_size, out_size));
                }
                break;
            case OpKind::scale:
                if (want_a) accumulate(a, em.scale(u, attr));
                break;
            case OpKind::matmul: {
                const std::size_t m = nodes_[a].value.extent(0);
                const std::size_t k = nodes_[a].value.extent(1);
                if (nodes_[b].value.rank() == 1) {
                    if (want_a)
                        accumulate(a, em.matmul(em.reshape(u, {m, 1}), em.reshape(em.input(b), {1, k})));
                    if (want_b) accumulate(b, em.matmul(em.transpose(em.input(a)), u));
                } else {
                    if (want_a) accumulate(a, em.matmul(u, em.transpose(em.input(b))));
                    if (want_b) accumulate(b, em.matmul(em.transpose(em.input(a)), u));
                }
                break;
            }
            case OpKind::relu:
                if (want_a) accumulate(a, em.mul(u, em.gt_mask(em.input(a), 0.0)));
                break;
            case OpKind::gt_mask:
                break; // piecewise constant
            case OpKind::sum:
                if (want_a) {
                    std::vector<std::size_t> a_shape = nodes_[a].value.shape();
                    accumulate(a, em.mul(em.constant(Tensor::full(a_shape, 1.0)), u));
                }
                break;
            case OpKind::dot:
                if (want_a) accumulate(a, em.mul(em.input(b), u));
                if (want_b) accumulate(b, em.mul(em.input(a), u));
                break;
            case OpKind::norm:
                if (want_a) {
                    // Guarded at the zero vector: the subgradient there is taken as 0.
                    Handle safe = em.max_with_const(em.input(id), std::numeric_limits<double>::min());
                    accumulate(a, em.mul(em.input(a), em.div(u, safe)));
                }
                break;
            case OpKind::max_with_const:
                if (want_a) accumulate(a, em.mul(u, em.gt_mask(em.input(a), attr)));
                break;
            case OpKind::log_sum_exp:
                if (want_a) {
                    // exp(z - lse(z)) is softmax(z), never overflowing.
                    Handle shifted = em.add(em.input(a), em.scale(em.input(id), -1.0));
                    accumulate(a, em.mul(em.exp(shifted), u));
                }
                break;
            case OpKind::index_select:
                if (want_a) accumulate(a, em.mul(em.constant(onehot(a_size, sel)), u));
                break;
            case OpKind::exp:
                if (want_a) accumulate(a, em.mul(em.input(id), u));
                break;
            case OpKind::transpose:
                if (want_a) accumulate(a, em.transpose(u));
                break;
            case OpKind::reshape:
                if (want_a) {
                    std::vector<std::size_t> a_shape = nodes_[a].value.shape();
                    accumulate(a, em.reshape(u, std::move(a_shape)));
                }
                break;
        }
    }
}

std::vector<Tensor> Tape::gradients(NodeId output, std::span<const NodeId> wrt) const {
    EagerEmitter em{*this};
    std::vector<Tensor> adjoint;
    std::vector<char> has_adjoint;
    run_backward(output, wrt, em, adjoint, has_adjoint);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
        out.push_back(has_adjoint[w] ? std::move(adjoint[w]) : Tensor::zeros(nodes_[w].value.shape()));
    }
    return out;
}

std::vector<NodeId> Tape::gradients_recorded(NodeId output, std::span<const NodeId> wrt) {
    RecordingEmitter em{*this};
    std::vector<NodeId> adjoint;
    std::vector<char> has_adjoint;
    run_backward(output, wrt, em, adjoint, has_adjoint);
    std::vector<NodeId> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
        out.push_back(has_adjoint[w] ? adjoint[w] : constant(Tensor::zeros(nodes_[w].value.shape())));
    }
    return out;
}

} // namespace paglab

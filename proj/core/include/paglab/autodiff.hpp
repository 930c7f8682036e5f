#pragma once

#include "paglab/tensor.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace paglab {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoInput = UINT32_MAX;

/// Recorded primitives. Every backward rule is itself a composition of these,
/// so gradients can be differentiated again to any order with one mechanism.
enum class OpKind : std::uint8_t {
    leaf,          // external input (named) or captured constant (unnamed)
    add,           // elementwise; one side may be scalar
    mul,           // elementwise; one side may be scalar
    div,           // elementwise; one side may be scalar
    scale,         // multiply by fixed constant attr
    matmul,        // [m,n]x[n] -> [m] or [m,n]x[n,p] -> [m,p]
    relu,          // max(x, 0), subgradient at 0 fixed to 0
    gt_mask,       // 1 where x > attr else 0; piecewise constant, no gradient
    sum,           // reduce to scalar
    dot,           // 1-D inner product -> scalar
    norm,          // L2 norm -> scalar
    max_with_const,// elementwise max(x, attr)
    log_sum_exp,   // 1-D -> scalar, max-subtraction stabilized
    index_select,  // pick entry `index` of a 1-D tensor -> scalar
    exp,           // elementwise
    transpose,     // 2-D
    reshape,       // same element count
};

const char* op_name(OpKind op);

struct Node {
    OpKind op = OpKind::leaf;
    bool requires_grad = false;
    NodeId a = kNoInput;
    NodeId b = kNoInput;
    double attr = 0.0;        // scale factor / comparison constant
    std::size_t index = 0;    // index_select
    Tensor value;
};

/// Append-only computation graph. Node inputs always have smaller ids, so the
/// node list is its own topological order. Values are computed eagerly at
/// record time; replay() recomputes them after leaves are rebound.
class Tape {
public:
    NodeId leaf(const std::string& name, Tensor value, bool requires_grad);
    NodeId constant(Tensor value);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b); // composition: add(a, scale(b, -1))
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId matmul(NodeId a, NodeId b);
    NodeId relu(NodeId a);
    NodeId gt_mask(NodeId a, double threshold);
    NodeId sum(NodeId a);
    NodeId dot(NodeId a, NodeId b);
    NodeId norm(NodeId a);
    NodeId max_with_const(NodeId a, double c);
    NodeId log_sum_exp(NodeId a);
    NodeId index_select(NodeId a, std::size_t index);
    NodeId exp(NodeId a);
    NodeId transpose(NodeId a);
    NodeId reshape(NodeId a, std::vector<std::size_t> shape);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }
    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool is_leaf(NodeId id) const { return nodes_[id].op == OpKind::leaf; }

    /// Rebind one named leaf; shape must match the recorded one.
    void set_leaf(const std::string& name, Tensor value);
    void set_leaf(NodeId id, Tensor value);
    NodeId leaf_id(const std::string& name) const;
    const std::map<std::string, NodeId>& roots() const { return roots_; }

    /// Recompute every non-leaf value in recorded order.
    void replay();

    /// Bind every named leaf from `leaves` (all must be present), replay, and
    /// return the value of the last recorded node.
    Tensor forward(const std::map<std::string, Tensor>& leaves);

    /// d(output)/d(wrt_i) as plain tensors. output must be scalar-valued and
    /// every wrt node a leaf of this tape.
    std::vector<Tensor> gradients(NodeId output, std::span<const NodeId> wrt) const;

    /// Same, but the gradients are recorded on the tape as new nodes and can
    /// be differentiated again with respect to any leaf.
    std::vector<NodeId> gradients_recorded(NodeId output, std::span<const NodeId> wrt);

private:
    NodeId push(Node n);
    NodeId binary(OpKind op, NodeId a, NodeId b);
    NodeId unary(OpKind op, NodeId a, double attr = 0.0, std::size_t index = 0);
    void check_id(NodeId id, const char* what) const;
    Tensor compute(const Node& n) const;

    template <class Emitter>
    void run_backward(NodeId output, std::span<const NodeId> wrt, Emitter& em,
                      std::vector<typename Emitter::Handle>& adjoint,
                      std::vector<char>& has_adjoint) const;

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> roots_;
};

/// The ReLU derivative convention as a plain tensor op: 1 where pre > 0,
/// exactly 0 where pre <= 0.
Tensor relu_backward_mask(const Tensor& pre_activation);

} // namespace paglab

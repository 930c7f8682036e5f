#pragma once

#include "paglab/autodiff.hpp"
#include "paglab/mlp.hpp"
#include "paglab/tensor.hpp"

#include <span>

namespace paglab {

struct PagLossConfig {
    double lambda = 0.0;          // weight of the gradient-alignment term
    double cosine_epsilon = 1e-8; // denominator guard
    std::size_t class_count = 0;

    void validate() const;
};

/// -log softmax(z)[y], stabilized through log-sum-exp.
NodeId cross_entropy(Tape& tape, NodeId logits, std::size_t label);

/// 1 - (v.u) / max(|v||u|, eps). Considers direction only; the guard makes
/// zero vectors contribute a flat loss of 1 with zero gradient through the
/// denominator.
NodeId cosine_loss(Tape& tape, NodeId v, NodeId u, double eps);

struct PagLossGraph {
    ModelNodes model;
    NodeId ce = kNoInput;
    NodeId cosine_sum = kNoInput; // unweighted sum over target classes (kNoInput when lambda == 0)
    NodeId total = kNoInput;
};

/// Composite objective: CE plus lambda times the sum over all classes of the
/// cosine loss between the model's input-gradient for that class logit and
/// the supplied target direction. Input-gradients are recorded on the tape,
/// so the total stays differentiable with respect to the parameters.
/// With lambda == 0 the graph is exactly the cross-entropy graph.
PagLossGraph pag_total_loss(Tape& tape, const MlpModel& model, const Tensor& x, std::size_t label,
                            std::span<const Tensor> class_targets, const PagLossConfig& config);

} // namespace paglab

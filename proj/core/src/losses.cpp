#include "paglab/losses.hpp"

#include <stdexcept>

namespace paglab {

void PagLossConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("pag loss: lambda must be >= 0");
    if (cosine_epsilon <= 0.0) throw std::invalid_argument("pag loss: cosine epsilon must be > 0");
    if (class_count == 0) throw std::invalid_argument("pag loss: class count must be > 0");
}

NodeId cross_entropy(Tape& tape, NodeId logits, std::size_t label) {
    const Tensor& z = tape.value(logits);
    if (z.rank() != 1) throw std::invalid_argument("cross_entropy: logits must be 1-D, got " + z.shape_string());
    if (label >= z.size()) {
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                    std::to_string(z.size()) + " classes");
    }
    return tape.sub(tape.log_sum_exp(logits), tape.index_select(logits, label));
}

NodeId cosine_loss(Tape& tape, NodeId v, NodeId u, double eps) {
    const Tensor& vv = tape.value(v);
    const Tensor& uv = tape.value(u);
    if (!vv.same_shape(uv)) {
        throw std::invalid_argument("cosine_loss: shape mismatch " + vv.shape_string() + " vs " +
                                    uv.shape_string());
    }
    if (eps <= 0.0) throw std::invalid_argument("cosine_loss: eps must be > 0");
    NodeId denom = tape.max_with_const(tape.mul(tape.norm(v), tape.norm(u)), eps);
    NodeId similarity = tape.div(tape.dot(v, u), denom);
    return tape.add(tape.constant(Tensor::scalar(1.0)), tape.scale(similarity, -1.0));
}

PagLossGraph pag_total_loss(Tape& tape, const MlpModel& model, const Tensor& x, std::size_t label,
                            std::span<const Tensor> class_targets, const PagLossConfig& config) {
    config.validate();
    if (config.class_count != model.class_count()) {
        throw std::invalid_argument("pag loss: config class count " + std::to_string(config.class_count) +
                                    " does not match model output dim " + std::to_string(model.class_count()));
    }

    PagLossGraph g;
    g.model = record_mlp(tape, model, x);
    g.ce = cross_entropy(tape, g.model.logits, label);

    if (config.lambda == 0.0) {
        g.total = g.ce;
        return g;
    }

    if (class_targets.size() != model.class_count()) {
        throw std::invalid_argument("pag loss: need one target per class, got " +
                                    std::to_string(class_targets.size()) + " for " +
                                    std::to_string(model.class_count()) + " classes");
    }
    const NodeId wrt[] = {g.model.input};
    for (std::size_t target_class = 0; target_class < model.class_count(); ++target_class) {
        const Tensor& target = class_targets[target_class];
        if (target.rank() != 1 || target.extent(0) != model.input_dim()) {
            throw std::invalid_argument("pag loss: target for class " + std::to_string(target_class) +
                                        " has shape " + target.shape_string() + ", expected [" +
                                        std::to_string(model.input_dim()) + "]");
        }
        NodeId class_logit = tape.index_select(g.model.logits, target_class);
        NodeId input_grad = tape.gradients_recorded(class_logit, wrt)[0];
        NodeId cos = cosine_loss(tape, input_grad, tape.constant(target), config.cosine_epsilon);
        g.cosine_sum = g.cosine_sum == kNoInput ? cos : tape.add(g.cosine_sum, cos);
    }
    g.total = tape.add(g.ce, tape.scale(g.cosine_sum, config.lambda));
    return g;
}

} // namespace paglab

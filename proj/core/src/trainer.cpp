#include "paglab/trainer.hpp"

#include "paglab/losses.hpp"
#include "paglab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace paglab {

std::string to_string(Regime r) {
    switch (r) {
        case Regime::vanilla: return "vanilla";
        case Regime::pag: return "pag";
        case Regime::adversarial: return "adversarial";
    }
    return "?";
}

Regime regime_from_string(const std::string& s) {
    if (s == "vanilla") return Regime::vanilla;
    if (s == "pag") return Regime::pag;
    if (s == "adversarial") return Regime::adversarial;
    throw std::invalid_argument("unknown regime '" + s + "' (vanilla|pag|adversarial)");
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd-momentum";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
    throw std::invalid_argument("unknown optimizer '" + s + "' (adam|sgd-momentum)");
}

void sgd_momentum_step(std::vector<Tensor>& params, std::span<const Tensor> grads, SgdMomentumState& state,
                       const OptimizerConfig& config) {
    if (grads.size() != params.size()) throw std::invalid_argument("sgd: grads/params count mismatch");
    if (state.velocity.empty()) {
        for (const Tensor& p : params) state.velocity.push_back(Tensor::zeros(p.shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        Tensor& v = state.velocity[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) throw std::invalid_argument("sgd: grad shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double grad = g[k] + config.weight_decay * p[k];
            v[k] = config.momentum * v[k] + grad;
            p[k] -= config.learning_rate * v[k];
        }
    }
}

void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& config) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    if (grads.size() != params.size()) throw std::invalid_argument("adam: grads/params count mismatch");
    if (state.m.empty()) {
        for (const Tensor& p : params) {
            state.m.push_back(Tensor::zeros(p.shape()));
            state.v.push_back(Tensor::zeros(p.shape()));
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) throw std::invalid_argument("adam: grad shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double grad = g[k] + config.weight_decay * p[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * grad;
            v[k] = beta2 * v[k] + (1.0 - beta2) * grad * grad;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (regime == Regime::pag) {
        if (lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
        if (!(cosine_epsilon > 0.0)) throw std::invalid_argument("train: cosine epsilon must be > 0");
    }
}

namespace {

struct ExampleLoss {
    double total = 0.0;
    double ce = 0.0;
    double cos_weighted = 0.0;
};

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
}

} // namespace

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config, const RepStore* reps) {
    config.validate();
    data.validate();
    if (model.input_dim() != data.dim || model.class_count() != data.class_count) {
        throw std::invalid_argument("train: model (" + std::to_string(model.input_dim()) + "->" +
                                    std::to_string(model.class_count()) + ") does not fit dataset (M=" +
                                    std::to_string(data.dim) + ", C=" + std::to_string(data.class_count) + ")");
    }
    if ((reps != nullptr) != (config.regime == Regime::pag)) {
        throw std::invalid_argument("train: a rep store is required exactly for the pag regime");
    }
    if (reps) validate_store(*reps, data);
    if (config.regime == Regime::adversarial) {
        config.inner_threat.validate();
        config.inner_attack.validate();
    }

    PagLossConfig loss_config{config.lambda, config.cosine_epsilon, data.class_count};

    std::vector<Tensor*> params;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        params.push_back(&model.weights[l]);
        params.push_back(&model.biases[l]);
    }

    SgdMomentumState sgd_state;
    AdamState adam_state;
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5u));

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.log.reserve(config.epochs);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);

        double loss_sum = 0.0;
        double ce_sum = 0.0;
        double cos_sum = 0.0;

        for (std::size_t batch_start = 0; batch_start < data.size(); batch_start += config.batch_size) {
            const std::size_t batch_end = std::min(batch_start + config.batch_size, data.size());
            const std::size_t batch = batch_end - batch_start;

            std::vector<Tensor> grad_sum;
            for (Tensor* p : params) grad_sum.push_back(Tensor::zeros(p->shape()));
            double batch_loss = 0.0;

            for (std::size_t pos = batch_start; pos < batch_end; ++pos) {
                const std::size_t idx = order[pos];
                const Tensor x = data.sample_tensor(idx);
                const std::size_t label = data.y[idx];

                ExampleLoss ex;
                Tape tape;
                std::vector<Tensor> grads;
                switch (config.regime) {
                    case Regime::vanilla: {
                        ModelNodes nodes = record_mlp(tape, model, x);
                        NodeId loss = cross_entropy(tape, nodes.logits, label);
                        grads = tape.gradients(loss, nodes.parameter_nodes());
                        ex.total = ex.ce = tape.value(loss).item();
                        break;
                    }
                    case Regime::pag: {
                        PagLossGraph g =
                            pag_total_loss(tape, model, x, label, reps->targets_for_sample(idx), loss_config);
                        grads = tape.gradients(g.total, g.model.parameter_nodes());
                        ex.total = tape.value(g.total).item();
                        ex.ce = tape.value(g.ce).item();
                        ex.cos_weighted =
                            g.cosine_sum != kNoInput ? config.lambda * tape.value(g.cosine_sum).item() : 0.0;
                        break;
                    }
                    case Regime::adversarial: {
                        PgdConfig attack = config.inner_attack;
                        attack.seed = mix_seed(mix_seed(config.seed, 0xadu), epoch * data.size() + idx);
                        const Tensor adv = pgd(model, x, label, attack, config.inner_threat);
                        ModelNodes nodes = record_mlp(tape, model, adv);
                        NodeId loss = cross_entropy(tape, nodes.logits, label);
                        grads = tape.gradients(loss, nodes.parameter_nodes());
                        ex.total = ex.ce = tape.value(loss).item();
                        break;
                    }
                }

                if (!std::isfinite(ex.total)) {
                    throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batch_start / config.batch_size) +
                                             ", sample " + std::to_string(idx));
                }
                batch_loss += ex.total;
                ce_sum += ex.ce;
                cos_sum += ex.cos_weighted;
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    Tensor& acc = grad_sum[i];
                    const Tensor& g = grads[i];
                    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
                }
            }

            const double inv = 1.0 / static_cast<double>(batch);
            for (Tensor& g : grad_sum) {
                for (std::size_t k = 0; k < g.size(); ++k) g[k] *= inv;
            }
            loss_sum += batch_loss;

            std::vector<Tensor> current;
            current.reserve(params.size());
            for (Tensor* p : params) current.push_back(*p);
            if (config.optimizer.kind == OptimizerKind::adam) {
                adam_step(current, grad_sum, adam_state, config.optimizer);
            } else {
                sgd_momentum_step(current, grad_sum, sgd_state, config.optimizer);
            }
            for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(current[i]);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(data.size());
        rec.clean_acc = clean_accuracy(model, data);
        rec.ce_term = ce_sum / static_cast<double>(data.size());
        rec.cos_term = cos_sum / static_cast<double>(data.size());
        result.log.push_back(rec);
    }

    result.model = std::move(model);
    return result;
}

void write_metrics_csv(std::span<const EpochRecord> log, Regime regime, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("metrics: cannot open " + path.string() + " for writing");
    const bool pag = regime == Regime::pag;
    os << "epoch,regime,train_loss,clean_acc";
    if (pag) os << ",cos_term,ce_term";
    os << '\n';
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const EpochRecord& r : log) {
        os << r.epoch << ',' << to_string(regime) << ',';
        put(r.train_loss);
        os << ',';
        put(r.clean_acc);
        if (pag) {
            os << ',';
            put(r.cos_term);
            os << ',';
            put(r.ce_term);
        }
        os << '\n';
    }
    if (!os) throw std::runtime_error("metrics: write failed for " + path.string());
}

} // namespace paglab

#include "paglab/attacks.hpp"

#include "paglab/losses.hpp"
#include "paglab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace paglab {

namespace {

double l2_norm(const Tensor& v) {
    double sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sq += v[i] * v[i];
    return std::sqrt(sq);
}

void clamp_point(const Tensor& x, Tensor& delta, double lo, double hi) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double p = x[i] + delta[i];
        if (p < lo) delta[i] = lo - x[i];
        if (p > hi) delta[i] = hi - x[i];
    }
}

Tensor random_init_delta(const ThreatModel& threat, std::size_t dim, std::mt19937_64& rng) {
    Tensor delta({dim});
    if (threat.norm == NormKind::linf) {
        for (std::size_t i = 0; i < dim; ++i) delta[i] = uniform_range(rng, -threat.epsilon, threat.epsilon);
    } else {
        // Uniform in the ball: Gaussian direction, radius ~ eps * U^(1/M).
        double sq = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            delta[i] = normal01(rng);
            sq += delta[i] * delta[i];
        }
        const double n = std::sqrt(sq);
        if (n > 0.0) {
            const double radius =
                threat.epsilon * std::pow(uniform01(rng), 1.0 / static_cast<double>(dim));
            for (std::size_t i = 0; i < dim; ++i) delta[i] *= radius / n;
        }
    }
    return project(delta, threat);
}

} // namespace

void ThreatModel::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("threat model: epsilon must be > 0");
    if (value_clamp && !(value_clamp->first < value_clamp->second)) {
        throw std::invalid_argument("threat model: clamp lo must be < hi");
    }
}

void PgdConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("pgd: steps must be >= 1");
    if (step_size && !(*step_size > 0.0)) throw std::invalid_argument("pgd: step size must be > 0");
}

double PgdConfig::resolved_step_size(const ThreatModel& threat) const {
    return step_size ? *step_size : 2.0 * threat.epsilon / static_cast<double>(steps);
}

Tensor project(const Tensor& delta, const ThreatModel& threat) {
    Tensor out = delta;
    if (threat.norm == NormKind::linf) {
        const double e = threat.epsilon;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i] > e) out[i] = e;
            if (out[i] < -e) out[i] = -e;
        }
    } else {
        const double n = l2_norm(out);
        if (n > threat.epsilon) {
            const double factor = threat.epsilon / n;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
        }
    }
    return out;
}

Tensor pgd(const MlpModel& model, const Tensor& x, std::size_t label, const PgdConfig& config,
           const ThreatModel& threat, PgdStats* stats) {
    threat.validate();
    config.validate();
    const std::size_t loss_label = config.target_class ? *config.target_class : label;
    if (loss_label >= model.class_count()) {
        throw std::invalid_argument("pgd: class " + std::to_string(loss_label) + " out of range");
    }
    const double alpha = config.resolved_step_size(threat);
    const double direction = config.target_class ? -1.0 : 1.0;

    std::mt19937_64 rng(config.seed);
    Tensor delta = config.random_init ? random_init_delta(threat, x.size(), rng) : Tensor::zeros(x.shape());
    if (threat.value_clamp) clamp_point(x, delta, threat.value_clamp->first, threat.value_clamp->second);

    // One tape for all iterations: rebind the input and replay.
    Tape tape;
    ModelNodes nodes = record_mlp(tape, model, x);
    const NodeId loss = cross_entropy(tape, nodes.logits, loss_label);
    const NodeId wrt[] = {nodes.input};

    Tensor point(x.shape());
    for (std::size_t t = 0; t < config.steps; ++t) {
        for (std::size_t i = 0; i < point.size(); ++i) point[i] = x[i] + delta[i];
        tape.set_leaf(nodes.input, point);
        tape.replay();
        Tensor grad = tape.gradients(loss, wrt)[0];

        if (threat.norm == NormKind::linf) {
            for (std::size_t i = 0; i < delta.size(); ++i) {
                const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
                delta[i] += direction * alpha * s;
            }
        } else {
            const double n = l2_norm(grad);
            if (n == 0.0) {
                if (stats) ++stats->zero_gradient_steps;
            } else {
                for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += direction * alpha * grad[i] / n;
            }
        }
        delta = project(delta, threat);
        if (threat.value_clamp) clamp_point(x, delta, threat.value_clamp->first, threat.value_clamp->second);
    }

    for (std::size_t i = 0; i < point.size(); ++i) point[i] = x[i] + delta[i];
    return point;
}

double clean_accuracy(const MlpModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (model.predict(data.sample_tensor(i)) == data.y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy(const MlpModel& model, const Dataset& data, const PgdConfig& config,
                       const ThreatModel& threat, PgdStats* stats) {
    if (data.size() == 0) throw std::invalid_argument("robust accuracy: empty dataset");
    if (threat.epsilon == 0.0) return clean_accuracy(model, data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        PgdConfig per_sample = config;
        per_sample.seed = mix_seed(config.seed, i);
        const Tensor adv = pgd(model, data.sample_tensor(i), data.y[i], per_sample, threat, stats);
        if (model.predict(adv) == data.y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace paglab

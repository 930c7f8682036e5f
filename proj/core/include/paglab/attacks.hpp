#pragma once

#include "paglab/dataset.hpp"
#include "paglab/mlp.hpp"
#include "paglab/tensor.hpp"

#include <cstdint>
#include <optional>
#include <utility>

namespace paglab {

enum class NormKind { l2, linf };

/// Allowed perturbation set: an epsilon-ball plus an optional value range for
/// the perturbed point itself.
struct ThreatModel {
    NormKind norm = NormKind::l2;
    double epsilon = 0.0;
    std::optional<std::pair<double, double>> value_clamp;

    void validate() const;
};

struct PgdConfig {
    std::size_t steps = 10;
    std::optional<double> step_size; // defaults to 2*epsilon/steps
    bool random_init = false;
    std::optional<std::size_t> target_class;
    std::uint64_t seed = 0;

    void validate() const;
    double resolved_step_size(const ThreatModel& threat) const;
};

struct PgdStats {
    std::size_t zero_gradient_steps = 0;
};

/// Project a perturbation onto the threat ball: elementwise clamp for Linf,
/// radial scaling for L2. Identity inside the ball; idempotent.
Tensor project(const Tensor& delta, const ThreatModel& threat);

/// Projected gradient ascent on the classification loss (descent toward the
/// target class when one is set). Linf steps move by the gradient sign, L2
/// steps by the L2-normalized gradient; a zero gradient skips normalization
/// for that step and is counted in stats.
Tensor pgd(const MlpModel& model, const Tensor& x, std::size_t label, const PgdConfig& config,
           const ThreatModel& threat, PgdStats* stats = nullptr);

double clean_accuracy(const MlpModel& model, const Dataset& data);

/// Fraction of samples still predicted correctly after a per-sample attack.
/// Per-sample attack seeds derive from config.seed, so the result does not
/// depend on evaluation order. epsilon == 0 reduces to clean accuracy.
double robust_accuracy(const MlpModel& model, const Dataset& data, const PgdConfig& config,
                       const ThreatModel& threat, PgdStats* stats = nullptr);

} // namespace paglab

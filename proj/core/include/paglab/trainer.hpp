#pragma once

#include "paglab/attacks.hpp"
#include "paglab/dataset.hpp"
#include "paglab/mlp.hpp"
#include "paglab/reps.hpp"
#include "paglab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace paglab {

enum class Regime { vanilla, pag, adversarial };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.01;
    double momentum = 0.9;       // sgd_momentum only
    double weight_decay = 0.0;   // L2 term added to gradients
};

struct SgdMomentumState {
    std::vector<Tensor> velocity;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
};

void sgd_momentum_step(std::vector<Tensor>& params, std::span<const Tensor> grads, SgdMomentumState& state,
                       const OptimizerConfig& config);

/// Adam with beta = (0.9, 0.999), eps = 1e-8, bias-corrected moments.
void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& config);

struct TrainConfig {
    Regime regime = Regime::vanilla;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    double lambda = 0.0;          // pag regime
    double cosine_epsilon = 1e-8; // pag regime
    PgdConfig inner_attack;       // adversarial regime
    ThreatModel inner_threat;     // adversarial regime

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double clean_acc = 0.0;
    double ce_term = 0.0;  // pag regime only
    double cos_term = 0.0; // pag regime only: lambda-weighted cosine contribution
};

struct TrainResult {
    MlpModel model;
    std::vector<EpochRecord> log;
};

/// Shared loop for the three regimes. Fully deterministic given the seed:
/// per-epoch shuffles, inner-attack randomness and parameter updates all
/// derive from it. reps must be provided exactly for the pag regime.
TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config,
                  const RepStore* reps = nullptr);

void write_metrics_csv(std::span<const EpochRecord> log, Regime regime, const std::filesystem::path& path);

} // namespace paglab

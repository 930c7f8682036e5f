#pragma once

#include "paglab/autodiff.hpp"
#include "paglab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace paglab {

/// Fully-connected ReLU classifier. Weights are [out, in] row-major, biases
/// [out]; no activation after the last layer, so forward() yields logits.
struct MlpModel {
    std::vector<std::size_t> layer_dims;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t class_count() const { return layer_dims.back(); }
    std::size_t layer_count() const { return weights.size(); }

    /// Straight-line logits without a tape (evaluation fast path).
    Tensor forward(const Tensor& x) const;
    std::size_t predict(const Tensor& x) const;
};

/// Uniform init scaled by 1/sqrt(fan-in), zero biases, deterministic in seed.
MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

/// Parameter leaves plus the logits node of one model evaluation on a tape.
struct ModelNodes {
    std::vector<NodeId> weights;
    std::vector<NodeId> biases;
    NodeId input = kNoInput;
    NodeId logits = kNoInput;

    std::vector<NodeId> parameter_nodes() const;
};

/// Record the model's forward pass. Parameters become named leaves
/// ("w0", "b0", ...) with gradients enabled; the input becomes leaf "x".
ModelNodes record_mlp(Tape& tape, const MlpModel& model, const Tensor& x);

/// Pre-softmax scores recorded on the tape, so input-gradients are obtainable.
NodeId logits(const MlpModel& model, const Tensor& x, Tape& tape);

/// Checkpoint metadata: objective kind, lambda, seed, epochs and similar
/// run facts, kept as ordered key/value text.
using CheckpointMeta = std::map<std::string, std::string>;

void save_model(const MlpModel& model, const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedModel {
    MlpModel model;
    CheckpointMeta meta;
};

LoadedModel load_model(const std::filesystem::path& path);

} // namespace paglab

#pragma once

#include "paglab/dataset.hpp"
#include "paglab/mlp.hpp"
#include "paglab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace paglab {

/// Precomputed gradient targets g(x_i, class) for every (sample, class) pair,
/// laid out (sample, class, dim). Immutable once built.
struct RepStore {
    std::size_t sample_count = 0;
    std::size_t class_count = 0;
    std::size_t dim = 0;
    std::string scheme_tag;
    std::string params_text; // key=value lines describing how it was built
    std::vector<double> targets;

    std::span<const double> target(std::size_t sample, std::size_t cls) const {
        return {targets.data() + (sample * class_count + cls) * dim, dim};
    }
    Tensor target_tensor(std::size_t sample, std::size_t cls) const;
    std::vector<Tensor> targets_for_sample(std::size_t sample) const;
};

/// One fixed representative per class, chosen uniformly at random from the
/// class's training samples; g(x, c) = r_c - x.
RepStore one_image_reps(const Dataset& data, std::uint64_t seed);

/// Representative is the class mean rescaled so its L2 norm equals the
/// average sample norm of the whole training set; g(x, c) = r_c - x.
RepStore class_mean_reps(const Dataset& data);

/// The per-class candidate pools used by the nearest-neighbor scheme:
/// pool_size i.i.d. draws (with replacement) from each class's sample indices.
std::vector<std::vector<std::size_t>> sample_class_pools(const Dataset& data, std::size_t pool_size,
                                                         std::uint64_t seed);

/// Representative is the nearest pool member to x in L2, excluding pool
/// entries exactly equal to x; ties break toward the lowest sample index.
RepStore nearest_neighbor_reps(const Dataset& data, std::size_t pool_size, std::uint64_t seed);

/// Targets are the teacher's input-gradients of each class logit.
RepStore rigd_reps(const Dataset& data, const MlpModel& teacher, const std::string& teacher_tag = "");

void save_store(const RepStore& store, const std::filesystem::path& path);
RepStore load_store(const std::filesystem::path& path);

/// Shape compatibility check used before training against a loaded store.
void validate_store(const RepStore& store, const Dataset& data);

} // namespace paglab

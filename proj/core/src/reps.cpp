#include "paglab/reps.hpp"

#include "paglab/binio.hpp"
#include "paglab/rng.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace paglab {

namespace {

constexpr char kMagic[] = "PAGREP01";

std::vector<std::vector<std::size_t>> nonempty_classes(const Dataset& data) {
    auto by_class = data.indices_by_class();
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].empty()) {
            throw std::invalid_argument("reps: class " + std::to_string(c) + " has no samples");
        }
    }
    return by_class;
}

RepStore make_store(const Dataset& data, std::string scheme_tag, std::string params_text) {
    RepStore s;
    s.sample_count = data.size();
    s.class_count = data.class_count;
    s.dim = data.dim;
    s.scheme_tag = std::move(scheme_tag);
    s.params_text = std::move(params_text) + "dataset-hash=" + hex64(data.content_hash()) + "\n";
    s.targets.assign(s.sample_count * s.class_count * s.dim, 0.0);
    return s;
}

void fill_representative_targets(RepStore& store, const Dataset& data,
                                 const std::vector<std::vector<double>>& representatives) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto x = data.sample(i);
        for (std::size_t c = 0; c < data.class_count; ++c) {
            double* g = store.targets.data() + (i * store.class_count + c) * store.dim;
            for (std::size_t d = 0; d < store.dim; ++d) g[d] = representatives[c][d] - x[d];
        }
    }
}

} // namespace

Tensor RepStore::target_tensor(std::size_t sample, std::size_t cls) const {
    auto t = target(sample, cls);
    return Tensor({dim}, std::vector<double>(t.begin(), t.end()));
}

std::vector<Tensor> RepStore::targets_for_sample(std::size_t sample) const {
    std::vector<Tensor> out;
    out.reserve(class_count);
    for (std::size_t c = 0; c < class_count; ++c) out.push_back(target_tensor(sample, c));
    return out;
}

RepStore one_image_reps(const Dataset& data, std::uint64_t seed) {
    auto by_class = nonempty_classes(data);
    std::mt19937_64 rng(mix_seed(seed, 0x01));
    std::vector<std::vector<double>> reps(data.class_count);
    std::string indices_text;
    for (std::size_t c = 0; c < data.class_count; ++c) {
        const std::size_t pick = by_class[c][uniform_index(rng, by_class[c].size())];
        auto r = data.sample(pick);
        reps[c].assign(r.begin(), r.end());
        indices_text += (c ? "," : "") + std::to_string(pick);
    }
    RepStore s = make_store(data, "one-image",
                            "seed=" + std::to_string(seed) + "\nrep-indices=" + indices_text + "\n");
    fill_representative_targets(s, data, reps);
    return s;
}

RepStore class_mean_reps(const Dataset& data) {
    auto by_class = nonempty_classes(data);

    double norm_sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto x = data.sample(i);
        double sq = 0.0;
        for (double v : x) sq += v * v;
        norm_sum += std::sqrt(sq);
    }
    const double target_norm = norm_sum / static_cast<double>(data.size());

    std::vector<std::vector<double>> reps(data.class_count);
    for (std::size_t c = 0; c < data.class_count; ++c) {
        std::vector<double> mean(data.dim, 0.0);
        for (std::size_t idx : by_class[c]) {
            auto x = data.sample(idx);
            for (std::size_t d = 0; d < data.dim; ++d) mean[d] += x[d];
        }
        for (double& v : mean) v /= static_cast<double>(by_class[c].size());
        double sq = 0.0;
        for (double v : mean) sq += v * v;
        const double mean_norm = std::sqrt(sq);
        const double scale = mean_norm > 0.0 ? target_norm / mean_norm : 0.0;
        for (double& v : mean) v *= scale;
        reps[c] = std::move(mean);
    }

    RepStore s = make_store(data, "class-mean", "scale-target=mean-sample-norm\n");
    fill_representative_targets(s, data, reps);
    return s;
}

std::vector<std::vector<std::size_t>> sample_class_pools(const Dataset& data, std::size_t pool_size,
                                                         std::uint64_t seed) {
    if (pool_size == 0) throw std::invalid_argument("reps: pool size must be >= 1");
    auto by_class = nonempty_classes(data);
    std::vector<std::vector<std::size_t>> pools(data.class_count);
    for (std::size_t c = 0; c < data.class_count; ++c) {
        std::mt19937_64 rng(mix_seed(seed, 0x100 + c));
        pools[c].reserve(pool_size);
        for (std::size_t k = 0; k < pool_size; ++k) {
            pools[c].push_back(by_class[c][uniform_index(rng, by_class[c].size())]);
        }
    }
    return pools;
}

RepStore nearest_neighbor_reps(const Dataset& data, std::size_t pool_size, std::uint64_t seed) {
    auto pools = sample_class_pools(data, pool_size, seed);
    RepStore s = make_store(data, "nearest-neighbor",
                            "pool=" + std::to_string(pool_size) + "\nseed=" + std::to_string(seed) + "\n");

    for (std::size_t i = 0; i < data.size(); ++i) {
        auto x = data.sample(i);
        for (std::size_t c = 0; c < data.class_count; ++c) {
            bool found = false;
            double best_dist = 0.0;
            std::size_t best_idx = 0;
            for (std::size_t cand : pools[c]) {
                auto r = data.sample(cand);
                bool equal = true;
                double dist = 0.0;
                for (std::size_t d = 0; d < data.dim; ++d) {
                    const double diff = r[d] - x[d];
                    dist += diff * diff;
                    if (diff != 0.0) equal = false;
                }
                if (equal) continue; // the candidate is x itself
                if (!found || dist < best_dist || (dist == best_dist && cand < best_idx)) {
                    found = true;
                    best_dist = dist;
                    best_idx = cand;
                }
            }
            if (!found) {
                throw std::runtime_error("reps: class " + std::to_string(c) + " pool is empty after excluding sample " +
                                         std::to_string(i));
            }
            auto r = data.sample(best_idx);
            double* g = s.targets.data() + (i * s.class_count + c) * s.dim;
            for (std::size_t d = 0; d < s.dim; ++d) g[d] = r[d] - x[d];
        }
    }
    return s;
}

RepStore rigd_reps(const Dataset& data, const MlpModel& teacher, const std::string& teacher_tag) {
    if (teacher.input_dim() != data.dim) {
        throw std::invalid_argument("reps: teacher input dim " + std::to_string(teacher.input_dim()) +
                                    " does not match dataset dim " + std::to_string(data.dim));
    }
    if (teacher.class_count() != data.class_count) {
        throw std::invalid_argument("reps: teacher class count " + std::to_string(teacher.class_count()) +
                                    " does not match dataset classes " + std::to_string(data.class_count));
    }
    RepStore s = make_store(data, "rigd", "teacher=" + teacher_tag + "\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
        Tape tape;
        ModelNodes nodes = record_mlp(tape, teacher, data.sample_tensor(i));
        const NodeId wrt[] = {nodes.input};
        for (std::size_t c = 0; c < data.class_count; ++c) {
            const Tensor grad = tape.gradients(tape.index_select(nodes.logits, c), wrt)[0];
            double* g = s.targets.data() + (i * s.class_count + c) * s.dim;
            for (std::size_t d = 0; d < s.dim; ++d) g[d] = grad[d];
        }
    }
    return s;
}

void save_store(const RepStore& store, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("rep store: cannot open " + path.string() + " for writing");
    os.write(kMagic, 8);
    write_u32(os, static_cast<std::uint32_t>(store.sample_count));
    write_u32(os, static_cast<std::uint32_t>(store.class_count));
    write_u32(os, static_cast<std::uint32_t>(store.dim));
    write_lp_string(os, store.scheme_tag);
    write_lp_string(os, store.params_text);
    write_f64_span(os, store.targets);
    if (!os) throw std::runtime_error("rep store: write failed for " + path.string());
}

RepStore load_store(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("rep store: cannot open " + path.string());
    read_magic(is, kMagic, "rep store");
    RepStore s;
    s.sample_count = read_u32(is, "rep store sample count");
    s.class_count = read_u32(is, "rep store class count");
    s.dim = read_u32(is, "rep store dim");
    s.scheme_tag = read_lp_string(is, "rep store scheme tag");
    s.params_text = read_lp_string(is, "rep store params");
    s.targets.resize(s.sample_count * s.class_count * s.dim);
    read_f64_span(is, s.targets, "rep store targets");
    return s;
}

void validate_store(const RepStore& store, const Dataset& data) {
    if (store.sample_count != data.size() || store.dim != data.dim || store.class_count != data.class_count) {
        throw std::invalid_argument("rep store: shape (N=" + std::to_string(store.sample_count) + ", C=" +
                                    std::to_string(store.class_count) + ", M=" + std::to_string(store.dim) +
                                    ") does not match dataset (N=" + std::to_string(data.size()) + ", C=" +
                                    std::to_string(data.class_count) + ", M=" + std::to_string(data.dim) + ")");
    }
}

} // namespace paglab

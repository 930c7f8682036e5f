#include "paglab/mlp.hpp"

#include "paglab/binio.hpp"
#include "paglab/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace paglab {

namespace {

constexpr char kMagic[] = "PAGLAB01";
constexpr std::uint32_t kFormatVersion = 1;

void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) {
        throw std::invalid_argument("mlp: need at least input and output dims, got " +
                                    std::to_string(dims.size()));
    }
    for (std::size_t d : dims) {
        if (d == 0) throw std::invalid_argument("mlp: zero layer dim");
    }
}

} // namespace

Tensor MlpModel::forward(const Tensor& x) const {
    if (x.rank() != 1 || x.extent(0) != input_dim()) {
        throw std::invalid_argument("mlp: input shape " + x.shape_string() + " does not match input dim " +
                                    std::to_string(input_dim()));
    }
    std::vector<double> h(x.data().begin(), x.data().end());
    std::vector<double> next;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Tensor& w = weights[l];
        const Tensor& b = biases[l];
        const std::size_t out = w.extent(0);
        const std::size_t in = w.extent(1);
        next.assign(out, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < in; ++k) acc += w[i * in + k] * h[k];
            next[i] = acc + b[i];
        }
        if (l + 1 < weights.size()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        }
        h.swap(next);
    }
    const std::size_t out_dim = h.size();
    return Tensor({out_dim}, std::move(h));
}

std::size_t MlpModel::predict(const Tensor& x) const {
    const Tensor z = forward(x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.size(); ++i) {
        if (z[i] > z[best]) best = i;
    }
    return best;
}

MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    check_dims(layer_dims);
    MlpModel m;
    m.layer_dims = layer_dims;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t in = layer_dims[l];
        const std::size_t out = layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Tensor w({out, in});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = uniform_range(rng, -bound, bound);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Tensor::zeros({out}));
    }
    return m;
}

std::vector<NodeId> ModelNodes::parameter_nodes() const {
    std::vector<NodeId> out;
    out.reserve(weights.size() * 2);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(weights[l]);
        out.push_back(biases[l]);
    }
    return out;
}

ModelNodes record_mlp(Tape& tape, const MlpModel& model, const Tensor& x) {
    if (x.rank() != 1 || x.extent(0) != model.input_dim()) {
        throw std::invalid_argument("mlp: input shape " + x.shape_string() + " does not match input dim " +
                                    std::to_string(model.input_dim()));
    }
    ModelNodes nodes;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        nodes.weights.push_back(tape.leaf("w" + std::to_string(l), model.weights[l], true));
        nodes.biases.push_back(tape.leaf("b" + std::to_string(l), model.biases[l], true));
    }
    nodes.input = tape.leaf("x", x, true);

    NodeId h = nodes.input;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        h = tape.add(tape.matmul(nodes.weights[l], h), nodes.biases[l]);
        if (l + 1 < model.layer_count()) h = tape.relu(h);
    }
    nodes.logits = h;
    return nodes;
}

NodeId logits(const MlpModel& model, const Tensor& x, Tape& tape) {
    return record_mlp(tape, model, x).logits;
}

void save_model(const MlpModel& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic, 8);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(model.layer_dims.size()));
    for (std::size_t d : model.layer_dims) write_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        write_f64_span(os, model.weights[l].data());
        write_f64_span(os, model.biases[l].data());
    }
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : meta) j[k] = v;
    write_lp_string(os, j.dump());
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    read_magic(is, kMagic, "checkpoint");
    const std::uint32_t version = read_u32(is, "checkpoint version");
    if (version != kFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + ", expected " +
                                 std::to_string(kFormatVersion));
    }
    const std::uint32_t layer_count = read_u32(is, "checkpoint layer count");
    if (layer_count < 2 || layer_count > 64) {
        throw std::runtime_error("checkpoint: implausible layer count " + std::to_string(layer_count));
    }
    std::vector<std::size_t> dims(layer_count);
    for (auto& d : dims) d = read_u32(is, "checkpoint layer dims");

    LoadedModel out;
    out.model.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Tensor w({dims[l + 1], dims[l]});
        read_f64_span(is, w.data(), "checkpoint weights");
        Tensor b({dims[l + 1]});
        read_f64_span(is, b.data(), "checkpoint biases");
        out.model.weights.push_back(std::move(w));
        out.model.biases.push_back(std::move(b));
    }

    const std::string meta_text = read_lp_string(is, "checkpoint metadata");
    nlohmann::json j = nlohmann::json::parse(meta_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("checkpoint: corrupt metadata block");
    }
    for (const auto& [k, v] : j.items()) out.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return out;
}

} // namespace paglab

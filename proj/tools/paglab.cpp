#include "paglab/attacks.hpp"
#include "paglab/binio.hpp"
#include "paglab/dataset.hpp"
#include "paglab/losses.hpp"
#include "paglab/mlp.hpp"
#include "paglab/reps.hpp"
#include "paglab/trainer.hpp"

#include "boundary.hpp"
#include "run_config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace paglab;
using namespace paglab::cli;

namespace {

// ---------------------------------------------------------------- option sets

const std::vector<OptionSpec> kDataSpecs = {
    {"data", "toy", "dataset kind: toy|csv|images"},
    {"data-path", "", "path for csv/images data"},
    {"data-seed", "0", "seed for the generated toy dataset"},
    {"toy-train-per-mode", "1000", "toy training samples per mode"},
    {"toy-test-per-mode", "100", "toy test samples per mode"},
    {"limit", "", "take only the first N records (images data)"},
};

const std::vector<OptionSpec> kRepSpecs = {
    {"scheme", "", "rep scheme: one-image|class-mean|nearest-neighbor|rigd"},
    {"pool", "100", "nearest-neighbor pool size"},
    {"seed", "0", "seed for randomized schemes"},
    {"teacher", "", "teacher checkpoint path (rigd)"},
};

const std::vector<OptionSpec> kTrainSpecs = {
    {"regime", "vanilla", "training regime: vanilla|pag|adversarial"},
    {"epochs", "100", "training epochs"},
    {"batch-size", "128", "batch size"},
    {"optimizer", "adam", "optimizer: adam|sgd-momentum"},
    {"lr", "0.01", "learning rate"},
    {"momentum", "0.9", "sgd momentum"},
    {"weight-decay", "0", "L2 weight decay"},
    {"lambda", "0", "gradient-alignment weight"},
    {"cosine-eps", "1e-8", "cosine loss denominator guard"},
    {"seed", "0", "run seed (init, shuffling, attacks)"},
    {"reps", "", "rep store file (pag); built in-process from scheme when unset"},
    {"scheme", "", "rep scheme for in-process store"},
    {"pool", "100", "nearest-neighbor pool size"},
    {"teacher", "", "teacher checkpoint (rigd scheme)"},
    {"hidden", "32", "hidden layer width"},
    {"at-norm", "l2", "inner attack norm (adversarial regime)"},
    {"at-eps", "15", "inner attack radius"},
    {"at-steps", "10", "inner attack steps"},
    {"at-step-size", "", "inner attack step size (default 2*eps/steps)"},
    {"at-random-init", "true", "inner attack random init"},
};

const std::vector<OptionSpec> kEvalAttackSpecs = {
    {"eval-norm", "l2", "evaluation attack norm: l2|linf"},
    {"eval-eps", "", "evaluation attack radius (0 skips the attack)"},
    {"eval-steps", "20", "evaluation attack steps"},
    {"eval-step-size", "", "evaluation attack step size (default 2*eps/steps)"},
    {"eval-random-init", "true", "evaluation attack random init"},
    {"eval-seed", "0", "evaluation attack seed"},
    {"clamp-lo", "", "value clamp lower bound"},
    {"clamp-hi", "", "value clamp upper bound"},
};

const std::vector<OptionSpec> kGridSpecs = {
    {"grid-x1-min", "-60", "grid lower x1 bound"},
    {"grid-x1-max", "60", "grid upper x1 bound"},
    {"grid-x2-min", "-120", "grid lower x2 bound"},
    {"grid-x2-max", "120", "grid upper x2 bound"},
    {"grid-width", "600", "grid cells along x1"},
    {"grid-height", "600", "grid cells along x2"},
};

const std::map<std::string, std::map<std::string, std::string>> kTrainPresets = {
    {"toy-vanilla",
     {{"data", "toy"}, {"regime", "vanilla"}, {"epochs", "100"}, {"batch-size", "128"},
      {"optimizer", "adam"}, {"lr", "0.01"}, {"hidden", "32"},
      {"eval-norm", "l2"}, {"eval-eps", "15"}, {"eval-steps", "10"}, {"eval-step-size", "2"},
      {"eval-random-init", "false"}}},
    {"toy-pag-oi", {{"regime", "pag"}, {"scheme", "one-image"}, {"lambda", "0.5"}}},
    {"toy-pag-cm", {{"regime", "pag"}, {"scheme", "class-mean"}, {"lambda", "0.4"}}},
    {"toy-pag-nn", {{"regime", "pag"}, {"scheme", "nearest-neighbor"}, {"pool", "100"}, {"lambda", "0.4"}}},
    {"toy-at",
     {{"regime", "adversarial"}, {"at-norm", "l2"}, {"at-eps", "15"}, {"at-steps", "10"},
      {"at-random-init", "true"}}},
    {"toy-rigd", {{"regime", "pag"}, {"scheme", "rigd"}, {"lambda", "0.4"}}},
};

std::vector<OptionSpec> merge_specs(std::initializer_list<const std::vector<OptionSpec>*> lists,
                                    std::vector<OptionSpec> extra = {}) {
    std::vector<OptionSpec> out;
    auto push = [&](const OptionSpec& s) {
        for (const OptionSpec& have : out) {
            if (have.key == s.key) return;
        }
        out.push_back(s);
    };
    for (const auto* l : lists) {
        for (const OptionSpec& s : *l) push(s);
    }
    for (const OptionSpec& s : extra) push(s);
    return out;
}

// Registers one CLI flag per option key; returns storage that remembers
// which flags the user actually passed.
std::shared_ptr<std::map<std::string, std::string>> wire_options(CLI::App* sub, RunConfig& cfg) {
    auto provided = std::make_shared<std::map<std::string, std::string>>();
    for (const OptionSpec& spec : cfg.specs()) {
        const std::string key = spec.key;
        sub->add_option_function<std::string>(
            "--" + key, [provided, key](const std::string& v) { (*provided)[key] = v; }, spec.help);
    }
    return provided;
}

struct CommonArgs {
    std::string preset;
    std::string config_path;
};

void finalize_config(RunConfig& cfg, const CommonArgs& args,
                     const std::map<std::string, std::string>& provided,
                     const std::map<std::string, std::map<std::string, std::string>>& presets) {
    if (!args.preset.empty()) {
        auto it = presets.find(args.preset);
        if (it == presets.end()) {
            std::string names;
            for (const auto& [name, _] : presets) names += (names.empty() ? "" : ", ") + name;
            throw std::runtime_error("unknown preset '" + args.preset + "' (available: " + names + ")");
        }
        // non-vanilla toy presets build on the toy-vanilla settings
        if (args.preset != "toy-vanilla" && presets.count("toy-vanilla") && args.preset.rfind("toy-", 0) == 0) {
            cfg.apply_preset("toy-vanilla", presets.at("toy-vanilla"));
        }
        cfg.apply_preset(args.preset, it->second);
    }
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    for (const auto& [k, v] : provided) cfg.set_override(k, v);
}

// ----------------------------------------------------------------- data layer

struct ResolvedData {
    Dataset train;
    std::optional<Dataset> test;
    std::vector<std::pair<std::string, std::string>> manifest;
};

ResolvedData resolve_dataset(const RunConfig& cfg) {
    ResolvedData out;
    const std::string kind = cfg.get_string("data");
    if (kind == "toy") {
        ToySplits splits = toy_generate(cfg.get_u64("data-seed"), cfg.get_u64("toy-train-per-mode"),
                                        cfg.get_u64("toy-test-per-mode"));
        out.train = std::move(splits.train);
        out.test = std::move(splits.test);
        out.manifest.emplace_back("data-hash", hex64(out.train.content_hash()));
    } else if (kind == "csv") {
        const std::string path = cfg.get_string("data-path");
        out.train = load_csv(path);
        out.manifest.emplace_back("data-hash", hex64(hash_file(path)));
    } else if (kind == "images") {
        const std::string path = cfg.get_string("data-path");
        std::optional<std::size_t> limit;
        if (cfg.has("limit")) limit = cfg.get_u64("limit");
        out.train = load_image_batches(path, limit);
        out.manifest.emplace_back("data-hash", hex64(hash_file(path)));
    } else {
        throw std::runtime_error("unknown data kind '" + kind + "' (toy|csv|images)");
    }
    return out;
}

RepStore build_reps(const RunConfig& cfg, const Dataset& data,
                    std::vector<std::pair<std::string, std::string>>& manifest) {
    const std::string scheme = cfg.get_string("scheme");
    if (scheme == "one-image") return one_image_reps(data, cfg.get_u64("seed"));
    if (scheme == "class-mean") return class_mean_reps(data);
    if (scheme == "nearest-neighbor" || scheme == "nn") {
        return nearest_neighbor_reps(data, cfg.get_u64("pool"), cfg.get_u64("seed"));
    }
    if (scheme == "rigd") {
        if (!cfg.has("teacher")) {
            throw std::runtime_error("scheme rigd requires --teacher CHECKPOINT "
                                     "(rigd only distills; it is an empirical upper bound, not a "
                                     "robustness-from-alignment result)");
        }
        const std::string teacher_path = cfg.get_string("teacher");
        LoadedModel teacher = load_model(teacher_path);
        const std::string tag = hex64(hash_file(teacher_path));
        manifest.emplace_back("teacher-hash", tag);
        return rigd_reps(data, teacher.model, tag);
    }
    throw std::runtime_error("unknown scheme '" + scheme +
                             "' (one-image|class-mean|nearest-neighbor|rigd)");
}

ThreatModel eval_threat(const RunConfig& cfg) {
    ThreatModel t;
    const std::string norm = cfg.get_string("eval-norm");
    if (norm == "l2") {
        t.norm = NormKind::l2;
    } else if (norm == "linf") {
        t.norm = NormKind::linf;
    } else {
        throw std::runtime_error("unknown norm '" + norm + "' (l2|linf)");
    }
    t.epsilon = cfg.get_double("eval-eps");
    const auto lo = cfg.get_optional_double("clamp-lo");
    const auto hi = cfg.get_optional_double("clamp-hi");
    if (lo.has_value() != hi.has_value()) {
        throw std::runtime_error("clamp-lo and clamp-hi must be set together");
    }
    if (lo) {
        t.value_clamp = std::make_pair(*lo, *hi);
    } else if (cfg.get_string("data") == "images") {
        t.value_clamp = std::make_pair(0.0, 1.0); // pixel data stays in range
    }
    return t;
}

PgdConfig eval_attack(const RunConfig& cfg) {
    PgdConfig a;
    a.steps = cfg.get_u64("eval-steps");
    a.step_size = cfg.get_optional_double("eval-step-size");
    a.random_init = cfg.get_bool("eval-random-init");
    a.seed = cfg.get_u64("eval-seed");
    return a;
}

std::string json_report(const json& j) { return j.dump(2) + "\n"; }

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
    const fs::path dir = cfg.get_string("out");
    fs::create_directories(dir);
    cfg.write_resolved(dir / "resolved.cfg");
    return dir;
}

// ----------------------------------------------------------------- subcommands

int cmd_make_reps(RunConfig& cfg) {
    const fs::path dir = prepare_out_dir(cfg);
    ResolvedData data = resolve_dataset(cfg);
    RepStore store = build_reps(cfg, data.train, data.manifest);
    save_store(store, dir / "reps.bin");
    write_manifest(dir, data.manifest);

    double norm_sum = 0.0;
    for (std::size_t i = 0; i < store.class_count; ++i) {
        auto g = store.target(0, i);
        double sq = 0.0;
        for (double v : g) sq += v * v;
        norm_sum += std::sqrt(sq);
    }
    json j{{"scheme", store.scheme_tag},
           {"samples", store.sample_count},
           {"classes", store.class_count},
           {"dim", store.dim},
           {"mean_target_norm_sample0", norm_sum / static_cast<double>(store.class_count)},
           {"store", (dir / "reps.bin").string()}};
    std::cout << json_report(j);
    return 0;
}

MlpModel train_from_config(RunConfig& cfg, const fs::path& dir, ResolvedData& data, json& report) {
    const Regime regime = regime_from_string(cfg.get_string("regime"));
    const std::uint64_t seed = cfg.get_u64("seed");

    TrainConfig tc;
    tc.regime = regime;
    tc.epochs = cfg.get_u64("epochs");
    tc.batch_size = cfg.get_u64("batch-size");
    tc.optimizer.kind = optimizer_from_string(cfg.get_string("optimizer"));
    tc.optimizer.learning_rate = cfg.get_double("lr");
    tc.optimizer.momentum = cfg.get_double("momentum");
    tc.optimizer.weight_decay = cfg.get_double("weight-decay");
    tc.seed = seed;
    tc.lambda = cfg.get_double("lambda");
    tc.cosine_epsilon = cfg.get_double("cosine-eps");

    std::optional<RepStore> reps;
    if (regime == Regime::pag) {
        if (cfg.has("reps")) {
            const std::string path = cfg.get_string("reps");
            reps = load_store(path);
            validate_store(*reps, data.train);
            data.manifest.emplace_back("reps-hash", hex64(hash_file(path)));
        } else {
            reps = build_reps(cfg, data.train, data.manifest);
            save_store(*reps, dir / "reps.bin");
        }
    } else if (regime == Regime::adversarial) {
        tc.inner_threat.norm = cfg.get_string("at-norm") == "linf" ? NormKind::linf : NormKind::l2;
        tc.inner_threat.epsilon = cfg.get_double("at-eps");
        if (cfg.get_string("data") == "images") tc.inner_threat.value_clamp = std::make_pair(0.0, 1.0);
        tc.inner_attack.steps = cfg.get_u64("at-steps");
        tc.inner_attack.step_size = cfg.get_optional_double("at-step-size");
        tc.inner_attack.random_init = cfg.get_bool("at-random-init");
    }

    std::vector<std::size_t> dims{data.train.dim, cfg.get_u64("hidden"), data.train.class_count};
    TrainResult result = train(init_mlp(dims, seed), data.train, tc, reps ? &*reps : nullptr);
    write_metrics_csv(result.log, regime, dir / "metrics.csv");

    CheckpointMeta meta{{"objective", to_string(regime)},
                        {"lambda", cfg.get_string("lambda")},
                        {"seed", cfg.get_string("seed")},
                        {"epochs", cfg.get_string("epochs")}};
    if (cfg.has("scheme")) meta["scheme"] = cfg.get_string("scheme");
    save_model(result.model, meta, dir / "checkpoint.bin");

    report["regime"] = to_string(regime);
    report["epochs"] = tc.epochs;
    report["final_train_loss"] = result.log.back().train_loss;
    report["clean_train_acc"] = result.log.back().clean_acc;
    return std::move(result.model);
}

int cmd_train(RunConfig& cfg) {
    const fs::path dir = prepare_out_dir(cfg);
    ResolvedData data = resolve_dataset(cfg);
    json report;
    MlpModel model = train_from_config(cfg, dir, data, report);

    if (data.test) {
        report["clean_test_acc"] = clean_accuracy(model, *data.test);
        if (cfg.has("eval-eps")) {
            ThreatModel t = eval_threat(cfg);
            PgdConfig attack = eval_attack(cfg);
            report["robust_test_acc"] = robust_accuracy(model, *data.test, attack, t);
            report["attack"] = {{"norm", cfg.get_string("eval-norm")},
                                {"epsilon", t.epsilon},
                                {"steps", attack.steps},
                                {"step_size", attack.resolved_step_size(t)},
                                {"random_init", attack.random_init}};
        }
    }
    report["checkpoint"] = (dir / "checkpoint.bin").string();
    write_manifest(dir, data.manifest);
    write_text_file(dir / "report.json", json_report(report));
    std::cout << json_report(report);
    return 0;
}

int cmd_eval(RunConfig& cfg) {
    const std::string checkpoint_path = cfg.get_string("checkpoint");
    LoadedModel loaded = load_model(checkpoint_path);
    ResolvedData data = resolve_dataset(cfg);
    const Dataset& eval_set = data.test ? *data.test : data.train;

    ThreatModel t = eval_threat(cfg);
    PgdConfig attack = eval_attack(cfg);

    json report;
    report["checkpoint"] = checkpoint_path;
    report["clean_acc"] = clean_accuracy(loaded.model, eval_set);
    PgdStats stats;
    report["robust_acc"] = robust_accuracy(loaded.model, eval_set, attack, t, &stats);
    report["attack"] = {{"norm", cfg.get_string("eval-norm")},
                        {"epsilon", t.epsilon},
                        {"steps", attack.steps},
                        {"step_size", t.epsilon > 0.0 ? attack.resolved_step_size(t) : 0.0},
                        {"random_init", attack.random_init},
                        {"zero_gradient_steps", stats.zero_gradient_steps}};
    report["samples"] = eval_set.size();

    if (cfg.has("out")) {
        const fs::path dir = prepare_out_dir(cfg);
        data.manifest.emplace_back("checkpoint-hash", hex64(hash_file(checkpoint_path)));
        write_manifest(dir, data.manifest);
        write_text_file(dir / "report.json", json_report(report));
    }
    std::cout << json_report(report);
    return 0;
}

int cmd_export_boundary(RunConfig& cfg) {
    const fs::path dir = prepare_out_dir(cfg);
    const std::string checkpoint_path = cfg.get_string("checkpoint");
    LoadedModel loaded = load_model(checkpoint_path);

    GridSpec grid;
    grid.x1_min = cfg.get_double("grid-x1-min");
    grid.x1_max = cfg.get_double("grid-x1-max");
    grid.x2_min = cfg.get_double("grid-x2-min");
    grid.x2_max = cfg.get_double("grid-x2-max");
    grid.width = cfg.get_u64("grid-width");
    grid.height = cfg.get_u64("grid-height");

    ResolvedData data = resolve_dataset(cfg);
    const Dataset& points = data.test ? *data.test : data.train;

    const auto preds = evaluate_grid(loaded.model, grid);
    write_ppm(preds, grid, dir / "boundary.ppm");
    write_grid_csv(preds, grid, dir / "grid.csv");
    write_points_csv(loaded.model, points, dir / "points.csv");
    MarginStats stats = margin_statistics(loaded.model, points, preds, grid);
    write_margin_csv(stats, dir / "margin.csv");

    data.manifest.emplace_back("checkpoint-hash", hex64(hash_file(checkpoint_path)));
    write_manifest(dir, data.manifest);

    json j{{"raster", (dir / "boundary.ppm").string()},
           {"grid", {{"width", grid.width}, {"height", grid.height}}},
           {"mean_margin", stats.overall_mean}};
    std::cout << json_report(j);
    return 0;
}

int cmd_sweep_lambda(RunConfig& cfg) {
    const fs::path dir = prepare_out_dir(cfg);
    if (regime_from_string(cfg.get_string("regime")) != Regime::pag) {
        throw std::runtime_error("sweep-lambda requires regime=pag");
    }
    std::vector<double> lambdas;
    {
        std::stringstream ss(cfg.get_string("lambdas"));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) lambdas.push_back(std::stod(item));
        }
    }
    if (lambdas.empty()) throw std::runtime_error("sweep-lambda needs a nonempty --lambdas list");

    ResolvedData data = resolve_dataset(cfg);
    if (!data.test) throw std::runtime_error("sweep-lambda needs a dataset with a test split (toy)");
    ThreatModel t = eval_threat(cfg);
    PgdConfig attack = eval_attack(cfg);

    std::vector<std::pair<std::string, std::string>> manifest = data.manifest;
    RepStore reps = build_reps(cfg, data.train, manifest);

    std::ofstream table(dir / "sweep.csv");
    table << "lambda,clean_acc,robust_acc\n";
    char buf[96];
    json rows = json::array();
    for (double lambda : lambdas) {
        RunConfig per_run = cfg;
        per_run.set_override("lambda", std::to_string(lambda));
        json unused;
        fs::path run_dir = dir / ("lambda-" + std::to_string(lambda));
        fs::create_directories(run_dir);
        ResolvedData run_data = data; // same dataset for every run
        // reuse the prebuilt store: write it where train_from_config expects a file
        save_store(reps, run_dir / "reps-in.bin");
        per_run.set_override("reps", (run_dir / "reps-in.bin").string());
        per_run.write_resolved(run_dir / "resolved.cfg");
        MlpModel model = train_from_config(per_run, run_dir, run_data, unused);

        const double clean = clean_accuracy(model, *data.test);
        const double robust = robust_accuracy(model, *data.test, attack, t);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", lambda, clean, robust);
        table << buf;
        rows.push_back({{"lambda", lambda}, {"clean_acc", clean}, {"robust_acc", robust}});
    }
    table.close();
    write_manifest(dir, manifest);
    std::cout << json_report(json{{"sweep", rows}, {"table", (dir / "sweep.csv").string()}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    static_assert(std::endian::native == std::endian::little,
                  "binary file formats assume a little-endian host");

    CLI::App app{"input-gradient alignment laboratory: train classifiers whose input-gradients "
                 "point at class representatives, attack them with PGD, and export the results"};
    app.require_subcommand(1);

    struct SubWiring {
        RunConfig cfg;
        CommonArgs args;
        std::shared_ptr<std::map<std::string, std::string>> provided;
        int (*run)(RunConfig&);
        const std::map<std::string, std::map<std::string, std::string>>* presets;
    };
    std::vector<std::unique_ptr<SubWiring>> wirings;

    auto add_sub = [&](const char* name, const char* help, std::vector<OptionSpec> specs,
                       int (*run)(RunConfig&), bool with_preset) {
        CLI::App* sub = app.add_subcommand(name, help);
        auto w = std::make_unique<SubWiring>(SubWiring{RunConfig(std::move(specs)), {}, nullptr, run,
                                                       with_preset ? &kTrainPresets : nullptr});
        w->provided = wire_options(sub, w->cfg);
        sub->add_option("--config", w->args.config_path, "key=value config file");
        if (with_preset) sub->add_option("--preset", w->args.preset, "named settings bundle");
        SubWiring* raw = w.get();
        sub->callback([raw] {
            finalize_config(raw->cfg, raw->args, *raw->provided,
                            raw->presets ? *raw->presets : std::map<std::string, std::map<std::string, std::string>>{});
            std::exit(raw->run(raw->cfg));
        });
        wirings.push_back(std::move(w));
    };

    add_sub("make-reps", "build and save a gradient-target store",
            merge_specs({&kDataSpecs, &kRepSpecs}, {{"out", "", "output directory"}}), cmd_make_reps,
            false);
    add_sub("train", "train a classifier and write checkpoint + metrics",
            merge_specs({&kDataSpecs, &kTrainSpecs, &kEvalAttackSpecs}, {{"out", "", "output directory"}}),
            cmd_train, true);
    add_sub("eval", "clean and robust accuracy of a checkpoint",
            merge_specs({&kDataSpecs, &kEvalAttackSpecs},
                        {{"checkpoint", "", "model checkpoint"}, {"out", "", "optional output directory"}}),
            cmd_eval, false);
    add_sub("export-boundary", "rasterize the decision boundary of a 2-D model",
            merge_specs({&kDataSpecs, &kGridSpecs},
                        {{"checkpoint", "", "model checkpoint"}, {"out", "", "output directory"}}),
            cmd_export_boundary, false);
    add_sub("sweep-lambda", "train one pag model per lambda and tabulate accuracies",
            merge_specs({&kDataSpecs, &kTrainSpecs, &kEvalAttackSpecs},
                        {{"lambdas", "", "comma-separated lambda list"}, {"out", "", "output directory"}}),
            cmd_sweep_lambda, true);

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

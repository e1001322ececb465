#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "onlinebev/onlinebev.h"

namespace {

struct CliError {
    int code;
};

void check(obev_status s, const std::string& what)
{
    if (s != OBEV_OK) {
        std::cerr << "error: " << what << ": " << obev_status_name(s) << ": " << obev_last_error() << "\n";
        throw CliError{static_cast<int>(s)};
    }
}

void write_text(const std::string& path, const char* text)
{
    std::ofstream f(path, std::ios::binary);
    f << text;
    f.close();
    if (!f) {
        std::cerr << "error: cannot write " << path << "\n";
        throw CliError{static_cast<int>(OBEV_ERR_IO)};
    }
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
};

using Config = Handle<obev_config, obev_config_free>;
using Dataset = Handle<obev_dataset, obev_dataset_free>;
using ModelH = Handle<obev_model, obev_model_free>;
using Text = Handle<char, obev_string_free>;

void load_config(Config& cfg, const std::string& path, const std::optional<std::uint64_t>& seed)
{
    check(obev_config_load(path.c_str(), &cfg.p), "loading " + path);
    if (seed) check(obev_config_set_seed(cfg.p, *seed), "--seed");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Online BEV temporal fusion on synthetic scenes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", obev_version());

    std::string config;
    std::string data;
    std::string out;
    std::string ckpt;
    std::string report;
    std::string metrics;
    std::string split = "val";
    std::optional<std::uint64_t> seed;

    auto* gen = app.add_subcommand("generate", "Generate train and validation scenes");
    gen->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Base seed of the generated scenes");

    auto* tr = app.add_subcommand("train", "Train a model on <data>/train.obds");
    tr->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    tr->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", out, "Checkpoint path")->required();
    tr->add_option("--metrics", metrics, "Also write the training metrics CSV here");
    tr->add_option("--seed", seed, "Training seed");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--report", report, "Metrics CSV")->required();
    ev->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));

    auto* ab = app.add_subcommand("ablate", "Train and evaluate every arm for every seed");
    ab->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    ab->add_option("--out", out, "Comparison CSV")->required();
    ab->add_option("--seed", seed, "Run a single seed instead of the configured list");

    auto* dump = app.add_subcommand("dump-heatmaps", "Write predicted heatmaps as PGM files");
    dump->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    dump->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    dump->add_option("--out", out, "Output directory")->required();
    dump->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            Config cfg;
            check(obev_config_load(config.c_str(), &cfg.p), "loading " + config);
            if (seed) check(obev_config_set_data_seed(cfg.p, *seed), "--seed");
            check(obev_generate(cfg.p, out.c_str()), "generate");
            Dataset d;
            size_t scenes = 0;
            size_t frames = 0;
            check(obev_dataset_load(out.c_str(), "train", &d.p), "reading back " + out);
            check(obev_dataset_counts(d.p, &scenes, &frames), "generate");
            std::cerr << "wrote " << out << " (train: " << scenes << " scenes, " << frames << " frames)\n";
        } else if (*tr) {
            Config cfg;
            load_config(cfg, config, seed);
            Dataset d;
            check(obev_dataset_load(data.c_str(), "train", &d.p), "loading " + data);
            ModelH m;
            Text csv;
            check(obev_train(cfg.p, d.p, &m.p, &csv.p), "train");
            check(obev_model_save(m.p, out.c_str()), "saving " + out);
            if (!metrics.empty()) write_text(metrics, csv.p);
            std::fputs(csv.p, stdout);
        } else if (*ev) {
            ModelH m;
            check(obev_model_load(ckpt.c_str(), &m.p), "loading " + ckpt);
            Dataset d;
            check(obev_dataset_load(data.c_str(), split.c_str(), &d.p), "loading " + data);
            Text csv;
            check(obev_evaluate(m.p, d.p, &csv.p), "eval");
            write_text(report, csv.p);
            std::fputs(csv.p, stdout);
        } else if (*ab) {
            Config cfg;
            load_config(cfg, config, seed);
            Text csv;
            check(obev_ablate(cfg.p, &csv.p), "ablate");
            write_text(out, csv.p);
            std::fputs(csv.p, stdout);
        } else if (*dump) {
            ModelH m;
            check(obev_model_load(ckpt.c_str(), &m.p), "loading " + ckpt);
            Dataset d;
            check(obev_dataset_load(data.c_str(), split.c_str(), &d.p), "loading " + data);
            size_t n = 0;
            check(obev_dump_heatmaps(m.p, d.p, out.c_str(), &n), "dump-heatmaps");
            std::cerr << "wrote " << n << " heatmaps to " << out << "\n";
        }
    } catch (const CliError& e) {
        return e.code;
    }
    return 0;
}

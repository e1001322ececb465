#include "onlinebev/onlinebev.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include <json.hpp>

#include "onlinebev/ablate.hpp"
#include "onlinebev/binfile.hpp"
#include "onlinebev/checkpoint.hpp"
#include "onlinebev/config.hpp"
#include "onlinebev/dataset.hpp"
#include "onlinebev/error.hpp"
#include "onlinebev/pgm.hpp"
#include "onlinebev/train.hpp"

struct obev_config {
    obev::RunConfig cfg;
};

struct obev_dataset {
    obev::Dataset data;
};

struct obev_model {
    obev::RunConfig cfg;
    obev::Model model;
};

namespace {

thread_local std::string g_last_error;

class InvalidArgument : public obev::Error {
public:
    using obev::Error::Error;
};

obev_status fail(obev_status status, const char* what)
{
    g_last_error = what;
    return status;
}

template <class F>
obev_status guarded(F&& body)
{
    try {
        body();
        return OBEV_OK;
    } catch (const InvalidArgument& e) {
        return fail(OBEV_ERR_INVALID_ARGUMENT, e.what());
    } catch (const obev::DimensionError& e) {
        return fail(OBEV_ERR_DIMENSION, e.what());
    } catch (const obev::ConfigError& e) {
        return fail(OBEV_ERR_CONFIG, e.what());
    } catch (const obev::ParseError& e) {
        return fail(OBEV_ERR_PARSE, e.what());
    } catch (const obev::IoError& e) {
        return fail(OBEV_ERR_IO, e.what());
    } catch (const obev::NumericError& e) {
        return fail(OBEV_ERR_NUMERIC, e.what());
    } catch (const obev::SequenceError& e) {
        return fail(OBEV_ERR_SEQUENCE, e.what());
    } catch (const obev::GenerationError& e) {
        return fail(OBEV_ERR_GENERATION, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(OBEV_ERR_PARSE, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(OBEV_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(OBEV_ERR_OUT_OF_MEMORY, "out of memory");
    } catch (const std::exception& e) {
        return fail(OBEV_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(OBEV_ERR_INTERNAL, "unknown error");
    }
}

template <class T>
const T& need(const T* p, const char* what)
{
    if (p == nullptr) throw InvalidArgument(std::string(what) + " is NULL");
    return *p;
}

template <class T>
T& need(T* p, const char* what)
{
    if (p == nullptr) throw InvalidArgument(std::string(what) + " is NULL");
    return *p;
}

const char* need_str(const char* s, const char* what)
{
    if (s == nullptr) throw InvalidArgument(std::string(what) + " is NULL");
    return s;
}

char* dup_string(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void make_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw obev::IoError("cannot create directory " + dir + ": " + ec.message());
}

// The checkpoint must hold exactly the parameters the configured model creates.
void check_layout(const obev::Model& model)
{
    const obev::Model fresh(model.config, model.grid, 0);
    for (const auto& [name, e] : fresh.params) {
        if (!model.params.contains(name)) throw obev::ConfigError("checkpoint lacks parameter " + name);
        if (model.params.value(name).shape() != e.value.shape()) {
            throw obev::DimensionError("checkpoint parameter " + name + " has shape " +
                                       obev::shape_string(model.params.value(name).shape()) + ", model expects " +
                                       obev::shape_string(e.value.shape()));
        }
    }
    if (model.params.size() != fresh.params.size()) throw obev::ConfigError("checkpoint has parameters the model does not use");
}

void check_compatible(const obev::Model& model, const obev::Dataset& data)
{
    const obev::GridSpec& g = data.config.grid;
    if (g.rows != model.grid.rows || g.cols != model.grid.cols || g.cell_size != model.grid.cell_size) {
        throw obev::ConfigError("dataset grid does not match the model grid");
    }
    if (data.config.channels != model.config.input_channels || data.config.num_classes() != model.config.num_classes) {
        throw obev::ConfigError("dataset channels or classes do not match the model");
    }
}

}  // namespace

extern "C" {

const char* obev_version(void)
{
    return "1.0.0";
}

const char* obev_status_name(obev_status status)
{
    switch (status) {
    case OBEV_OK: return "ok";
    case OBEV_ERR_INVALID_ARGUMENT: return "invalid argument";
    case OBEV_ERR_DIMENSION: return "dimension error";
    case OBEV_ERR_CONFIG: return "config error";
    case OBEV_ERR_PARSE: return "parse error";
    case OBEV_ERR_IO: return "io error";
    case OBEV_ERR_NUMERIC: return "numeric error";
    case OBEV_ERR_SEQUENCE: return "sequence error";
    case OBEV_ERR_GENERATION: return "generation error";
    case OBEV_ERR_OUT_OF_MEMORY: return "out of memory";
    case OBEV_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* obev_last_error(void)
{
    return g_last_error.c_str();
}

void obev_string_free(char* s)
{
    std::free(s);
}

obev_status obev_config_default(obev_config** out)
{
    return guarded([&] {
        need(out, "out");
        *out = new obev_config{};
    });
}

obev_status obev_config_load(const char* path, obev_config** out)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        *out = new obev_config{obev::load_run_config(need_str(path, "path"))};
    });
}

obev_status obev_config_parse(const char* json_text, obev_config** out)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(need_str(json_text, "json_text"));
        } catch (const nlohmann::json::exception& e) {
            throw obev::ConfigError(std::string("config: ") + e.what());
        }
        *out = new obev_config{obev::run_config_from_json(j)};
    });
}

obev_status obev_config_set_seed(obev_config* cfg, uint64_t seed)
{
    return guarded([&] {
        auto& c = need(cfg, "cfg").cfg;
        c.seed = seed;
        c.ablate.seeds = {seed};
    });
}

obev_status obev_config_set_data_seed(obev_config* cfg, uint64_t seed)
{
    return guarded([&] { need(cfg, "cfg").cfg.dataset.base_seed = seed; });
}

obev_status obev_config_to_json(const obev_config* cfg, char** out_json)
{
    return guarded([&] {
        need(out_json, "out_json");
        *out_json = dup_string(obev::run_config_to_json(need(cfg, "cfg").cfg).dump(2) + "\n");
    });
}

void obev_config_free(obev_config* cfg)
{
    delete cfg;
}

obev_status obev_generate(const obev_config* cfg, const char* out_dir)
{
    return guarded([&] {
        const obev::RunConfig& c = need(cfg, "cfg").cfg;
        const std::string dir = need_str(out_dir, "out_dir");
        const obev::Splits splits = obev::make_splits(c);
        make_dir(dir);
        obev::write_dataset(splits.train, dir + "/train.obds");
        obev::write_dataset(splits.val, dir + "/val.obds");
        obev::write_file(dir + "/config.json", obev::run_config_to_json(c).dump(2) + "\n");
    });
}

obev_status obev_dataset_load(const char* dir, const char* split, obev_dataset** out)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        const std::string s = need_str(split, "split");
        if (s != "train" && s != "val") throw InvalidArgument("split must be \"train\" or \"val\", got \"" + s + "\"");
        *out = new obev_dataset{obev::read_dataset(std::string(need_str(dir, "dir")) + "/" + s + ".obds")};
    });
}

obev_status obev_dataset_read_file(const char* path, obev_dataset** out)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        *out = new obev_dataset{obev::read_dataset(need_str(path, "path"))};
    });
}

obev_status obev_dataset_counts(const obev_dataset* data, size_t* scenes, size_t* frames)
{
    return guarded([&] {
        const obev::Dataset& d = need(data, "data").data;
        std::size_t n = 0;
        for (const auto& s : d.scenes) n += s.frames.size();
        if (scenes != nullptr) *scenes = d.scenes.size();
        if (frames != nullptr) *frames = n;
    });
}

void obev_dataset_free(obev_dataset* data)
{
    delete data;
}

obev_status obev_train(const obev_config* cfg, const obev_dataset* data, obev_model** out, char** metrics_csv)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        obev::RunConfig c = need(cfg, "cfg").cfg;
        const obev::Dataset& d = need(data, "data").data;
        c.generator = d.config;
        c.model.input_channels = d.config.channels;
        c.model.num_classes = d.config.num_classes();
        obev::TrainResult tr = obev::train(c.model, c.train, d, c.seed);
        std::string csv = obev::training_metrics_csv(tr.curve);
        auto* m = new obev_model{c, obev::Model(c.model, d.config.grid, std::move(tr.params))};
        if (metrics_csv != nullptr) {
            try {
                *metrics_csv = dup_string(csv);
            } catch (...) {
                delete m;
                throw;
            }
        }
        *out = m;
    });
}

obev_status obev_model_save(const obev_model* model, const char* path)
{
    return guarded([&] {
        const obev_model& m = need(model, "model");
        obev::save_checkpoint(need_str(path, "path"), m.model.params, {{"run_config", obev::run_config_to_json(m.cfg)}});
    });
}

obev_status obev_model_load(const char* path, obev_model** out)
{
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        obev::Checkpoint ck = obev::load_checkpoint(need_str(path, "path"));
        if (!ck.meta.is_object() || !ck.meta.contains("run_config")) {
            throw obev::ParseError(std::string(path) + ": checkpoint carries no run configuration");
        }
        const obev::RunConfig c = obev::run_config_from_json(ck.meta.at("run_config"));
        obev::Model model(c.model, c.generator.grid, std::move(ck.params));
        check_layout(model);
        *out = new obev_model{c, std::move(model)};
    });
}

obev_status obev_model_parameter_count(const obev_model* model, size_t* out)
{
    return guarded([&] { need(out, "out") = need(model, "model").model.params.parameter_count(); });
}

void obev_model_free(obev_model* model)
{
    delete model;
}

obev_status obev_evaluate(const obev_model* model, const obev_dataset* data, char** report_csv)
{
    return guarded([&] {
        need(report_csv, "report_csv");
        const obev_model& m = need(model, "model");
        const obev::Dataset& d = need(data, "data").data;
        check_compatible(m.model, d);
        std::vector<std::pair<std::string, obev::MetricsReport>> rows;
        rows.emplace_back("clean", obev::evaluate_model(m.model, d, m.cfg.eval));
        for (obev::Corruption c : m.cfg.ablate.corruptions) {
            rows.emplace_back(obev::to_string(c), obev::evaluate_model(m.model, d, m.cfg.eval, c, m.cfg.dataset.base_seed + 2));
        }
        *report_csv = dup_string(obev::metrics_csv(rows, m.cfg.eval));
    });
}

obev_status obev_dump_heatmaps(const obev_model* model, const obev_dataset* data, const char* out_dir,
                               size_t* files_written)
{
    return guarded([&] {
        const obev_model& m = need(model, "model");
        const obev::Dataset& d = need(data, "data").data;
        const std::string dir = need_str(out_dir, "out_dir");
        check_compatible(m.model, d);
        make_dir(dir);
        std::size_t n = 0;
        for (const auto& scene : d.scenes) {
            std::vector<obev::BevFeature> frames;
            for (const auto& f : scene.frames) frames.push_back(f.feature);
            const obev::SequenceOutput seq = obev::run_sequence(m.model, frames);
            for (std::size_t t = 0; t < frames.size(); ++t) {
                for (std::int64_t k = 0; k < seq.heat[t].dim(2); ++k) {
                    obev::write_file(dir + "/" + obev::heatmap_filename(scene.scene_id, frames[t].frame_index, k),
                                     obev::encode_pgm(seq.heat[t], k));
                    ++n;
                }
            }
        }
        if (files_written != nullptr) *files_written = n;
    });
}

obev_status obev_ablate(const obev_config* cfg, char** csv)
{
    return guarded([&] {
        need(csv, "csv");
        const obev::RunConfig& c = need(cfg, "cfg").cfg;
        *csv = dup_string(obev::ablation_csv(obev::run_ablation(c), c.ablate.corruptions));
    });
}

}  // extern "C"

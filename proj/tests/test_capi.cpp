#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "onlinebev/onlinebev.h"

extern "C" int capi_c_roundtrip(void);

namespace {

const char* kTiny = R"({
  "seed": 3,
  "generator": {"grid": {"rows": 10, "cols": 10, "cell_size": 0.5}, "channels": 4, "frames": 3, "max_objects": 2},
  "dataset": {"train_scenes": 2, "val_scenes": 2, "base_seed": 77},
  "model": {"method": "method_c", "channels": 4, "layers": 1, "heads": 2, "points": 2, "cwa_reduction": 2},
  "train": {"epochs": 2, "phase1_epochs": 1, "lr": 0.01},
  "ablate": {"seeds": [1], "arms": ["baseline_s", "method_c"], "corruptions": ["occlusion"]}
})";

std::string tmp_dir(const std::string& name)
{
    const char* base = std::getenv("OBEV_TEST_TMP");
    const std::filesystem::path p = std::filesystem::path(base ? base : std::filesystem::temp_directory_path().string()) / name;
    std::filesystem::remove_all(p);
    return p.string();
}

std::string take(char* s)
{
    std::string out = s;
    obev_string_free(s);
    return out;
}

std::string slurp(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

obev_config* tiny()
{
    obev_config* cfg = nullptr;
    REQUIRE(obev_config_parse(kTiny, &cfg) == OBEV_OK);
    return cfg;
}

}  // namespace

TEST_SUITE("capi")
{

TEST_CASE("header compiles as C")
{
    CHECK(capi_c_roundtrip() == 1);
}

TEST_CASE("status names and errors")
{
    CHECK(std::strcmp(obev_status_name(OBEV_OK), "ok") == 0);
    CHECK(std::strcmp(obev_status_name(OBEV_ERR_IO), "io error") == 0);
    CHECK(std::strlen(obev_version()) > 0);

    obev_config* cfg = nullptr;
    CHECK(obev_config_parse("{\"bogus\": 1}", &cfg) == OBEV_ERR_CONFIG);
    CHECK(cfg == nullptr);
    CHECK(std::string(obev_last_error()).find("bogus") != std::string::npos);
    CHECK(obev_config_parse("{not json", &cfg) == OBEV_ERR_CONFIG);
    CHECK(obev_config_parse(nullptr, &cfg) == OBEV_ERR_INVALID_ARGUMENT);
    CHECK(obev_config_load("/nonexistent/cfg.json", &cfg) == OBEV_ERR_IO);
    CHECK(obev_config_set_seed(nullptr, 1) == OBEV_ERR_INVALID_ARGUMENT);

    obev_dataset* d = nullptr;
    CHECK(obev_dataset_load("/nonexistent", "train", &d) == OBEV_ERR_IO);
    CHECK(obev_dataset_load("/nonexistent", "test", &d) == OBEV_ERR_INVALID_ARGUMENT);
    obev_model* m = nullptr;
    CHECK(obev_model_load("/nonexistent.ckpt", &m) == OBEV_ERR_IO);
    obev_config_free(nullptr);
    obev_dataset_free(nullptr);
    obev_model_free(nullptr);
}

TEST_CASE("seed overrides")
{
    obev_config* cfg = tiny();
    REQUIRE(obev_config_set_seed(cfg, 42) == OBEV_OK);
    REQUIRE(obev_config_set_data_seed(cfg, 9) == OBEV_OK);
    char* json = nullptr;
    REQUIRE(obev_config_to_json(cfg, &json) == OBEV_OK);
    const std::string text = take(json);
    CHECK(text.find("\"seed\": 42") != std::string::npos);
    CHECK(text.find("\"base_seed\": 9") != std::string::npos);
    CHECK(text.find("\"seeds\": [\n      42\n    ]") != std::string::npos);
    obev_config* again = nullptr;
    REQUIRE(obev_config_parse(text.c_str(), &again) == OBEV_OK);
    obev_config_free(again);
    obev_config_free(cfg);
}

TEST_CASE("generate, train, save, load, evaluate, dump")
{
    const std::string dir = tmp_dir("capi_flow");
    obev_config* cfg = tiny();
    REQUIRE(obev_generate(cfg, dir.c_str()) == OBEV_OK);
    CHECK(std::filesystem::exists(dir + "/config.json"));

    obev_dataset* train = nullptr;
    obev_dataset* val = nullptr;
    REQUIRE(obev_dataset_load(dir.c_str(), "train", &train) == OBEV_OK);
    REQUIRE(obev_dataset_load(dir.c_str(), "val", &val) == OBEV_OK);
    size_t scenes = 0;
    size_t frames = 0;
    REQUIRE(obev_dataset_counts(train, &scenes, &frames) == OBEV_OK);
    CHECK(scenes == 2);
    CHECK(frames == 6);

    obev_model* model = nullptr;
    char* csv = nullptr;
    REQUIRE(obev_train(cfg, train, &model, &csv) == OBEV_OK);
    const std::string metrics = take(csv);
    CHECK(metrics.rfind("epoch,phase,steps,loss_total,loss_cls,loss_reg,loss_cons\n", 0) == 0);

    obev_model* model2 = nullptr;
    REQUIRE(obev_train(cfg, train, &model2, &csv) == OBEV_OK);
    CHECK(take(csv) == metrics);

    const std::string ckpt = dir + "/model.ckpt";
    REQUIRE(obev_model_save(model, ckpt.c_str()) == OBEV_OK);
    obev_model* loaded = nullptr;
    REQUIRE(obev_model_load(ckpt.c_str(), &loaded) == OBEV_OK);
    size_t n1 = 0;
    size_t n2 = 0;
    REQUIRE(obev_model_parameter_count(model, &n1) == OBEV_OK);
    REQUIRE(obev_model_parameter_count(loaded, &n2) == OBEV_OK);
    CHECK(n1 == n2);
    CHECK(n1 > 0);

    char* r1 = nullptr;
    char* r2 = nullptr;
    REQUIRE(obev_evaluate(model, val, &r1) == OBEV_OK);
    REQUIRE(obev_evaluate(loaded, val, &r2) == OBEV_OK);
    const std::string report = take(r1);
    CHECK(report == take(r2));
    CHECK(report.rfind("condition,map,velocity_error,true_positives,alignment_error,alignment_frames,ap_c0_t1,", 0) == 0);
    CHECK(report.find("\nclean,") != std::string::npos);
    CHECK(report.find("\nocclusion,") != std::string::npos);

    const std::string heat_dir = dir + "/heat";
    size_t files = 0;
    REQUIRE(obev_dump_heatmaps(loaded, val, heat_dir.c_str(), &files) == OBEV_OK);
    CHECK(files == 2 * 3 * 3);
    const std::string pgm = slurp(heat_dir + "/2_0_0.pgm");
    CHECK(pgm.rfind("P5\n10 10\n255\n", 0) == 0);
    CHECK(pgm.size() == 13 + 100);

    // A checkpoint with a foreign layout is rejected.
    std::string bytes = slurp(ckpt);
    const std::size_t pos = bytes.find("\"method\":\"method_c\"");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 19, "\"method\":\"method_a\"");
    std::ofstream(dir + "/bad.ckpt", std::ios::binary) << bytes;
    obev_model* bad = nullptr;
    CHECK(obev_model_load((dir + "/bad.ckpt").c_str(), &bad) == OBEV_ERR_CONFIG);
    CHECK(bad == nullptr);

    obev_model_free(loaded);
    obev_model_free(model2);
    obev_model_free(model);
    obev_dataset_free(val);
    obev_dataset_free(train);
    obev_config_free(cfg);
}

TEST_CASE("ablate")
{
    obev_config* cfg = tiny();
    char* csv = nullptr;
    REQUIRE(obev_ablate(cfg, &csv) == OBEV_OK);
    const std::string out = take(csv);
    CHECK(out.rfind("arm,seed,map,map_occlusion,velocity_error,alignment_error,parameters,train_seconds,dataset_hash\n", 0) == 0);
    CHECK(out.find("\nbaseline_s,1,") != std::string::npos);
    CHECK(out.find("\nmethod_c,1,") != std::string::npos);
    obev_config_free(cfg);
}

}  // TEST_SUITE

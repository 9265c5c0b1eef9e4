#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "rtfn/cli.hpp"
#include "rtfn/model.hpp"

using namespace rtfn;

namespace {

const std::string kData = std::string(RTFN_DATA_DIR);
const std::string kWavesTrain = kData + "/datasets/SyntheticWaves_TRAIN.tsv";
const std::string kWavesTest = kData + "/datasets/SyntheticWaves_TEST.tsv";

int run(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::vector<const char*> argv{"rtfn"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream captured;
    std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    if (out) *out = captured.str();
    return rc;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "rtfn_cli_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string tiny_config(const std::filesystem::path& dir, bool for_cluster) {
    const auto path = dir / "config.txt";
    std::ofstream os(path);
    os << "conv_heads = 3:8,5:8\n";
    os << "residual_channels = 16\n";
    os << "lstm_hidden = 8\n";
    os << "dropout_rate = 0.1\n";
    os << "epochs = 5\n";
    os << "batch_size = 8\n";
    if (for_cluster) os << "decoder_widths = 16,24,16,96\n";
    return path.string();
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    return nlohmann::json::parse(is);
}

}  // namespace

TEST_CASE("reproduce-tables prints the pinned aggregate line and exits 0") {
    std::string out;
    const int rc = run({"reproduce-tables", "--data", kData + "/tables"}, &out);
    CHECK(rc == 0);
    CHECK(out.find("Table1 best=40 win=11 tie=29 lose=45 OK") != std::string::npos);
    CHECK(out.find("Table3 mean_accuracy=0.856049 OK") != std::string::npos);
    CHECK(out.find("Table4 avg_ri=0.7189 OK") != std::string::npos);
}

TEST_CASE("unknown subcommands and missing args exit nonzero") {
    CHECK(run({"frobnicate"}) != 0);
    CHECK(run({}) != 0);
    CHECK(run({"train", "only-one-file"}) != 0);
}

TEST_CASE("train writes checkpoint, history and metrics with the pinned schema") {
    const auto dir = fresh_dir("train");
    const std::string cfg = tiny_config(dir, false);
    std::string out;
    const int rc = run({"train", kWavesTrain, kWavesTest, "--config", cfg, "--seed", "5",
                        "--out", (dir / "run").string()},
                       &out);
    CHECK(rc == 0);
    CHECK(out.find("test_accuracy") != std::string::npos);

    CHECK(std::filesystem::exists(dir / "run" / "checkpoint.rtfn"));
    CHECK(std::filesystem::exists(dir / "run" / "history.csv"));
    const auto metrics = read_json(dir / "run" / "metrics.json");
    CHECK(metrics["dataset"] == "SyntheticWaves");
    CHECK(metrics["seed"] == 5);
    CHECK(metrics.contains("config_hash"));
    CHECK(metrics.contains("test_accuracy"));
    CHECK(metrics.contains("wall_time_s"));
    CHECK(metrics.size() == 5);

    const LoadedCheckpoint ckpt =
        read_checkpoint_header((dir / "run" / "checkpoint.rtfn").string());
    CHECK(ckpt.meta.pipeline == "supervised");
    CHECK(ckpt.meta.dataset == "SyntheticWaves");
    CHECK(ckpt.meta.raw_labels == std::vector<double>{1.0, 2.0});

    SUBCASE("evaluate reloads the checkpoint and prints the same accuracy") {
        std::string eval_out;
        const int eval_rc = run({"evaluate", "--checkpoint",
                                 (dir / "run" / "checkpoint.rtfn").string(), kWavesTest},
                                &eval_out);
        CHECK(eval_rc == 0);
        std::istringstream is(eval_out);
        std::string key;
        double acc = -1;
        is >> key >> acc;
        CHECK(key == "test_accuracy");
        CHECK(acc == doctest::Approx(metrics["test_accuracy"].get<double>()).epsilon(1e-12));
    }
}

TEST_CASE("explicit --seed beats RTFN_SEED which beats the default") {
    const auto dir = fresh_dir("seeds");
    const std::string cfg = tiny_config(dir, false);

    setenv("RTFN_SEED", "777", 1);
    CHECK(run({"train", kWavesTrain, kWavesTest, "--config", cfg, "--out",
               (dir / "env").string()}) == 0);
    CHECK(read_json(dir / "env" / "metrics.json")["seed"] == 777);

    CHECK(run({"train", kWavesTrain, kWavesTest, "--config", cfg, "--seed", "9", "--out",
               (dir / "flag").string()}) == 0);
    CHECK(read_json(dir / "flag" / "metrics.json")["seed"] == 9);
    unsetenv("RTFN_SEED");
}

TEST_CASE("the ablation flag drops the a-LSTM branch from the checkpoint") {
    const auto dir = fresh_dir("ablate");
    const std::string cfg = tiny_config(dir, false);
    CHECK(run({"train", kWavesTrain, kWavesTest, "--config", cfg, "--seed", "5",
               "--no-alstm", "--out", (dir / "run").string()}) == 0);
    const LoadedCheckpoint ckpt =
        read_checkpoint_header((dir / "run" / "checkpoint.rtfn").string());
    CHECK_FALSE(ckpt.config.use_attentional_lstm);
}

TEST_CASE("cluster writes a rand_index metric") {
    const auto dir = fresh_dir("cluster");
    const std::string cfg = tiny_config(dir, true);
    std::string out;
    const int rc = run({"cluster", kData + "/datasets/SyntheticShapes_TRAIN.csv",
                        kData + "/datasets/SyntheticShapes_TEST.csv", "--config", cfg,
                        "--seed", "3", "--out", (dir / "run").string()},
                       &out);
    CHECK(rc == 0);
    const auto metrics = read_json(dir / "run" / "metrics.json");
    CHECK(metrics.contains("rand_index"));
    const double ri = metrics["rand_index"].get<double>();
    CHECK(ri >= 0.0);
    CHECK(ri <= 1.0);
    const LoadedCheckpoint ckpt =
        read_checkpoint_header((dir / "run" / "checkpoint.rtfn").string());
    CHECK(ckpt.meta.pipeline == "autoencoder");
}

TEST_CASE("config and data errors exit nonzero") {
    const auto dir = fresh_dir("errors");
    SUBCASE("unknown config key") {
        const auto bad = dir / "bad.txt";
        std::ofstream(bad) << "not_a_real_key = 1\n";
        CHECK(run({"train", kWavesTrain, kWavesTest, "--config", bad.string()}) == 1);
    }
    SUBCASE("missing dataset file") {
        CHECK(run({"train", "/nonexistent.tsv", kWavesTest}) == 1);
    }
    SUBCASE("evaluate with an autoencoder checkpoint") {
        const std::string cfg = tiny_config(dir, true);
        REQUIRE(run({"cluster", kData + "/datasets/SyntheticShapes_TRAIN.csv",
                     kData + "/datasets/SyntheticShapes_TEST.csv", "--config", cfg, "--seed",
                     "3", "--out", (dir / "ae").string()}) == 0);
        CHECK(run({"evaluate", "--checkpoint", (dir / "ae" / "checkpoint.rtfn").string(),
                   kWavesTest}) == 1);
    }
}

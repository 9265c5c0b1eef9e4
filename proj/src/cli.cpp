#include "rtfn/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtfn/dataset.hpp"
#include "rtfn/eval.hpp"
#include "rtfn/gradcheck.hpp"
#include "rtfn/model.hpp"
#include "rtfn/train.hpp"

namespace rtfn {

namespace {

using nlohmann::json;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed) {
    if (flag_seed) return *flag_seed;
    if (const char* env = std::getenv("RTFN_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("RTFN_SEED value '" + std::string(env) + "' is not an integer");
        }
    }
    return 42;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// One config file feeds both the model and the training loop; a key unknown
// to both is an error.
void apply_config_file(const std::string& path, ModelConfig& mcfg, TrainConfig& tcfg,
                       int* restarts) {
    for (const auto& [key, value] : parse_flat_kv(read_file(path))) {
        if (key == "restarts") {
            if (restarts == nullptr)
                throw ConfigError("config key 'restarts' only applies to `cluster`");
            *restarts = std::stoi(value);
            continue;
        }
        try {
            apply_config_entry(mcfg, key, value);
            continue;
        } catch (const ConfigError& model_err) {
            if (std::string(model_err.what()).find("unknown model config key") ==
                std::string::npos)
                throw;
        }
        apply_train_config_entry(tcfg, key, value);
    }
}

std::string hash_hex(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_metrics(const std::string& path, const std::string& dataset, std::uint64_t seed,
                   const ModelConfig& cfg, const char* metric_key, double metric,
                   double wall_time_s) {
    json j;
    j["dataset"] = dataset;
    j["seed"] = seed;
    j["config_hash"] = hash_hex(cfg.config_hash());
    j[metric_key] = metric;
    j["wall_time_s"] = wall_time_s;
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

int cmd_train(const std::string& train_file, const std::string& test_file,
              const std::string& config_file, std::optional<std::uint64_t> seed_flag,
              bool no_alstm, const std::string& out_dir) {
    Timer timer;
    const SeriesDataset ds = load_ucr_dataset(train_file, test_file);

    ModelConfig mcfg;
    TrainConfig tcfg = TrainConfig::supervised_defaults();
    if (!config_file.empty()) apply_config_file(config_file, mcfg, tcfg, nullptr);
    mcfg.input_length = ds.input_length;
    mcfg.num_classes = ds.num_classes;
    if (no_alstm) mcfg.use_attentional_lstm = false;
    const std::uint64_t seed = resolve_seed(seed_flag);
    mcfg.seed = seed;
    tcfg.seed = seed;

    SupervisedResult result = train_supervised(ds, mcfg, tcfg);

    std::filesystem::create_directories(out_dir);
    const auto out = std::filesystem::path(out_dir);
    save_checkpoint((out / "checkpoint.rtfn").string(), mcfg,
                    {"supervised", ds.name, ds.raw_labels}, result.model->store());
    write_history_csv((out / "history.csv").string(), result.history);
    write_metrics((out / "metrics.json").string(), ds.name, seed, mcfg, "test_accuracy",
                  result.test_accuracy, timer.seconds());
    std::cout << "dataset " << ds.name << " test_accuracy " << result.test_accuracy << '\n';
    return 0;
}

int cmd_cluster(const std::string& train_file, const std::string& test_file,
                const std::string& config_file, std::optional<std::uint64_t> seed_flag,
                const std::string& out_dir) {
    Timer timer;
    const SeriesDataset ds = load_ucr_dataset(train_file, test_file);

    ModelConfig mcfg;
    TrainConfig tcfg = TrainConfig::unsupervised_defaults();
    int restarts = 10;
    if (!config_file.empty()) apply_config_file(config_file, mcfg, tcfg, &restarts);
    mcfg.input_length = ds.input_length;
    mcfg.num_classes = ds.num_classes;
    const std::uint64_t seed = resolve_seed(seed_flag);
    mcfg.seed = seed;
    tcfg.seed = seed;

    AutoencoderResult result = train_autoencoder(ds, mcfg, tcfg);

    // cluster the eval-mode features of the test split, k = class count
    std::vector<int> idx(ds.test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::vector<Tensor> chunks;
    std::vector<int> truth;
    Tensor features({static_cast<int>(ds.test.size()), result.model->rtfn().feature_dim()});
    int row = 0;
    for (std::size_t start = 0; start < idx.size(); start += 64) {
        std::vector<int> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                              idx.begin() + static_cast<std::ptrdiff_t>(
                                                std::min(start + 64, idx.size())));
        const Tensor feats = result.model->encode(batch_tensor(ds.test, part));
        std::copy(feats.values.begin(), feats.values.end(),
                  features.values.begin() +
                      static_cast<std::ptrdiff_t>(row) * features.shape[1]);
        row += feats.shape[0];
    }
    for (const auto& s : ds.test) truth.push_back(s.label);

    const ClusterAssignment clusters =
        kmeans_fit(features, ds.num_classes, restarts, derive_seed(seed, 201));
    const double ri = rand_index(clusters.labels, truth);

    std::filesystem::create_directories(out_dir);
    const auto out = std::filesystem::path(out_dir);
    save_checkpoint((out / "checkpoint.rtfn").string(), mcfg,
                    {"autoencoder", ds.name, ds.raw_labels}, result.model->store());
    write_history_csv((out / "history.csv").string(), result.history);
    write_metrics((out / "metrics.json").string(), ds.name, seed, mcfg, "rand_index", ri,
                  timer.seconds());
    std::cout << "dataset " << ds.name << " rand_index " << ri << '\n';
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& test_file) {
    const LoadedCheckpoint loaded = read_checkpoint_header(checkpoint);
    if (loaded.meta.pipeline != "supervised")
        throw DataError("checkpoint pipeline is '" + loaded.meta.pipeline +
                        "', evaluate needs a supervised checkpoint");
    SupervisedModel model(loaded.config);
    restore_params(checkpoint, model.store());
    const auto samples =
        load_ucr_split(test_file, loaded.meta.raw_labels, loaded.config.input_length);
    const double acc = evaluate_accuracy(model, samples, 16);
    std::cout << "test_accuracy " << acc << '\n';
    return 0;
}

int cmd_reproduce_tables(const std::string& data_dir) {
    const auto dir = std::filesystem::path(data_dir);
    bool ok = true;
    char line[256];

    const RankSummary t1 =
        rank_table(ResultsTable::from_csv((dir / "table1_appendix.csv").string()), "Ours");
    const bool ok1 = t1.best == 40 && t1.win == 11 && t1.tie == 29 && t1.lose == 45;
    std::snprintf(line, sizeof(line), "Table1 best=%d win=%d tie=%d lose=%d %s", t1.best,
                  t1.win, t1.tie, t1.lose, ok1 ? "OK" : "MISMATCH (want 40/11/29/45)");
    std::cout << line << '\n';

    const RankSummary t3 = rank_table(ResultsTable::from_csv((dir / "table3.csv").string()),
                                      "Ours");
    const bool ok3 = std::abs(t3.mean_value - 0.856049) <= 1e-6;
    std::snprintf(line, sizeof(line), "Table3 mean_accuracy=%.6f %s", t3.mean_value,
                  ok3 ? "OK" : "MISMATCH (want 0.856049)");
    std::cout << line << '\n';

    const RankSummary t4 = rank_table(ResultsTable::from_csv((dir / "table4.csv").string()),
                                      "Ours");
    const bool ok4 = std::abs(t4.mean_value - 0.7189) <= 5e-5;
    std::snprintf(line, sizeof(line), "Table4 avg_ri=%.4f %s", t4.mean_value,
                  ok4 ? "OK" : "MISMATCH (want 0.7189)");
    std::cout << line << '\n';

    ok = ok1 && ok3 && ok4;
    return ok ? 0 : 1;
}

int cmd_gradcheck(std::optional<std::uint64_t> seed_flag) {
    const auto results = run_gradcheck_suite(resolve_seed(seed_flag));
    for (const auto& r : results) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-28s instances=%-3d max_rel_err=%.3e tol=%.0e %s",
                      r.name.c_str(), r.instances, r.max_rel_err, r.tolerance,
                      r.pass ? "PASS" : "FAIL");
        std::cout << line << '\n';
    }
    return all_passed(results) ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"RTFN time-series feature network"};
    app.require_subcommand(1);

    std::string train_file, test_file, config_file, out_dir = ".", checkpoint;
    std::string data_dir = "data/tables";
    std::optional<std::uint64_t> seed;
    bool no_alstm = false;

    auto* train = app.add_subcommand("train", "supervised training on a UCR dataset");
    train->add_option("train-file", train_file)->required();
    train->add_option("test-file", test_file)->required();
    train->add_option("--config", config_file, "flat key = value config file");
    train->add_option("--seed", seed);
    train->add_flag("--no-alstm", no_alstm, "drop the attentional LSTM branch");
    train->add_option("--out", out_dir, "output directory");

    auto* cluster = app.add_subcommand("cluster", "autoencoder + K-means clustering");
    cluster->add_option("train-file", train_file)->required();
    cluster->add_option("test-file", test_file)->required();
    cluster->add_option("--config", config_file);
    cluster->add_option("--seed", seed);
    cluster->add_option("--out", out_dir);

    auto* evaluate = app.add_subcommand("evaluate", "test accuracy of a checkpoint");
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("test-file", test_file)->required();

    auto* tables = app.add_subcommand("reproduce-tables",
                                      "recompute published-table aggregates");
    tables->add_option("--data", data_dir, "directory holding the bundled table CSVs");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed())
            return cmd_train(train_file, test_file, config_file, seed, no_alstm, out_dir);
        if (cluster->parsed())
            return cmd_cluster(train_file, test_file, config_file, seed, out_dir);
        if (evaluate->parsed()) return cmd_evaluate(checkpoint, test_file);
        if (tables->parsed()) return cmd_reproduce_tables(data_dir);
        if (gradcheck->parsed()) return cmd_gradcheck(seed);
    } catch (const DataError& e) {
        std::cerr << "error: data: " << e.what() << '\n';
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "error: dimension: " << e.what() << '\n';
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: contract: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace rtfn

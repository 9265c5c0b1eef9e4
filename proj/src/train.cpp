#include "rtfn/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace rtfn {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (plateau_epochs < 1) throw ConfigError("plateau_epochs must be >= 1");
    if (lr_floor <= 0.0 || lr_floor > learning_rate)
        throw ConfigError("lr_floor must be in (0, learning_rate]");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("adam betas must be in [0, 1)");
    if (eps <= 0.0) throw ConfigError("adam eps must be positive");
}

void apply_train_config_entry(TrainConfig& cfg, const std::string& key,
                              const std::string& value) {
    auto as_int = [&](const std::string& v) {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse integer '" + v + "' for " + key);
        }
    };
    auto as_dbl = [&](const std::string& v) {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number '" + v + "' for " + key);
        }
    };
    if (key == "learning_rate") {
        cfg.learning_rate = as_dbl(value);
    } else if (key == "beta1") {
        cfg.beta1 = as_dbl(value);
    } else if (key == "beta2") {
        cfg.beta2 = as_dbl(value);
    } else if (key == "eps") {
        cfg.eps = as_dbl(value);
    } else if (key == "batch_size") {
        cfg.batch_size = as_int(value);
    } else if (key == "epochs") {
        cfg.epochs = as_int(value);
    } else if (key == "plateau_epochs") {
        cfg.plateau_epochs = as_int(value);
    } else if (key == "lr_floor") {
        cfg.lr_floor = as_dbl(value);
    } else {
        throw ConfigError("unknown train config key '" + key + "'");
    }
}

void AdamOptimizer::step(ParamStore& store, double learning_rate) {
    const auto& names = store.names();
    if (m_.empty()) {
        m_.resize(names.size());
        v_.resize(names.size());
    }
    if (m_.size() != names.size())
        throw ContractError("adam state does not match the parameter store");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t pi = 0; pi < names.size(); ++pi) {
        Param& p = store.at(names[pi]);
        if (!p.trainable) continue;
        if (p.grad.size() != p.value.size())
            throw ContractError("param '" + p.name + "' is missing its gradient buffer");
        auto& m = m_[pi];
        auto& v = v_[pi];
        if (m.empty()) {
            m.assign(p.value.size(), 0.0);
            v.assign(p.value.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    store.zero_grads();
}

Tensor batch_tensor(const std::vector<Sample>& samples, const std::vector<int>& indices) {
    if (indices.empty()) throw DataError("empty batch");
    const int t = static_cast<int>(samples[static_cast<std::size_t>(indices[0])].values.size());
    Tensor x({static_cast<int>(indices.size()), 1, t});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& v = samples[static_cast<std::size_t>(indices[i])].values;
        std::copy(v.begin(), v.end(), x.values.begin() + static_cast<std::ptrdiff_t>(i) * t);
    }
    return x;
}

std::vector<int> batch_labels(const std::vector<Sample>& samples,
                              const std::vector<int>& indices) {
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i)
        labels[i] = samples[static_cast<std::size_t>(indices[i])].label;
    return labels;
}

double evaluate_accuracy(const SupervisedModel& model, const std::vector<Sample>& samples,
                         int batch_size) {
    if (samples.empty()) throw DataError("evaluate_accuracy: empty sample set");
    int hits = 0;
    std::vector<int> idx;
    for (int start = 0; start < static_cast<int>(samples.size()); start += batch_size) {
        idx.clear();
        const int end = std::min<int>(start + batch_size, static_cast<int>(samples.size()));
        for (int i = start; i < end; ++i) idx.push_back(i);
        const auto pred = model.classify(batch_tensor(samples, idx));
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (pred[i] == samples[static_cast<std::size_t>(idx[i])].label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {

// Shared epoch driver: shuffles, forms batches (last partial batch kept) and
// hands each batch to `step`. Returns sample-weighted mean loss.
template <typename StepFn>
double run_epoch(int n_samples, int batch_size, Rng& shuffle_rng, StepFn step) {
    std::vector<int> order(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::vector<int> batch;
    for (int start = 0; start < n_samples; start += batch_size) {
        batch.clear();
        const int end = std::min(start + batch_size, n_samples);
        for (int i = start; i < end; ++i) batch.push_back(order[static_cast<std::size_t>(i)]);
        loss_sum += step(batch) * static_cast<double>(batch.size());
    }
    return loss_sum / static_cast<double>(n_samples);
}

}  // namespace

SupervisedResult train_supervised(const SeriesDataset& dataset, const ModelConfig& mcfg,
                                  const TrainConfig& tcfg) {
    tcfg.validate();
    if (dataset.train.empty()) throw DataError("train split is empty");
    if (dataset.test.empty()) throw DataError("test split is empty");
    std::vector<int> seen(static_cast<std::size_t>(dataset.num_classes), 0);
    for (const auto& s : dataset.train) ++seen[static_cast<std::size_t>(s.label)];
    for (int c = 0; c < dataset.num_classes; ++c)
        if (!seen[static_cast<std::size_t>(c)])
            throw DataError("class " + std::to_string(c) + " has no training samples");

    SupervisedResult result;
    result.model = std::make_unique<SupervisedModel>(mcfg);
    ParamStore& store = result.model->store();
    AdamOptimizer adam(tcfg);
    PlateauLr lr(tcfg.learning_rate, tcfg.plateau_epochs, tcfg.lr_floor);
    Rng shuffle_rng(derive_seed(tcfg.seed, 101));
    Rng dropout_rng(derive_seed(tcfg.seed, 102));

    const int n = static_cast<int>(dataset.train.size());
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        int hits = 0;
        const double mean_loss =
            run_epoch(n, tcfg.batch_size, shuffle_rng, [&](const std::vector<int>& batch) {
                Tape tape;
                const Tensor x = batch_tensor(dataset.train, batch);
                const auto labels = batch_labels(dataset.train, batch);
                const Tensor logits = result.model->logits(tape, x, true, dropout_rng);
                const Tensor loss = supervised_loss(tape, logits, labels);
                tape.backward(loss);
                store.pull_grads(tape);
                adam.step(store, lr.rate());
                const auto pred = argmax_rows(logits);
                for (std::size_t i = 0; i < pred.size(); ++i)
                    if (pred[i] == labels[i]) ++hits;
                return loss.values[0];
            });
        lr.observe(mean_loss);
        result.history.push_back(
            {epoch, mean_loss, static_cast<double>(hits) / static_cast<double>(n)});
    }
    result.test_accuracy = evaluate_accuracy(*result.model, dataset.test, tcfg.batch_size);
    return result;
}

AutoencoderResult train_autoencoder(const SeriesDataset& dataset, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg) {
    tcfg.validate();
    if (dataset.train.empty()) throw DataError("train split is empty");

    AutoencoderResult result;
    result.model = std::make_unique<AutoencoderModel>(mcfg);
    ParamStore& store = result.model->store();
    AdamOptimizer adam(tcfg);
    PlateauLr lr(tcfg.learning_rate, tcfg.plateau_epochs, tcfg.lr_floor);
    Rng shuffle_rng(derive_seed(tcfg.seed, 101));

    const int n = static_cast<int>(dataset.train.size());
    const int t = dataset.input_length;
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const double mean_loss =
            run_epoch(n, tcfg.batch_size, shuffle_rng, [&](const std::vector<int>& batch) {
                Tape tape;
                const Tensor x = batch_tensor(dataset.train, batch);
                const Tensor target = reshape(tape, x, {static_cast<int>(batch.size()), t});
                const Tensor rec = result.model->reconstruct(tape, x, true);
                const Tensor loss = reconstruction_loss(tape, target, rec);
                tape.backward(loss);
                store.pull_grads(tape);
                adam.step(store, lr.rate());
                return loss.values[0];
            });
        lr.observe(mean_loss);
        result.history.push_back({epoch, mean_loss, std::nan("")});
    }
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << "epoch,loss,accuracy\n";
    char buf[40];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf), "%.17g", rec.loss);
        os << rec.epoch << ',' << buf << ',';
        if (!std::isnan(rec.accuracy)) {
            std::snprintf(buf, sizeof(buf), "%.17g", rec.accuracy);
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace rtfn

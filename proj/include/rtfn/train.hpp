#ifndef RTFN_TRAIN_HPP
#define RTFN_TRAIN_HPP

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "rtfn/dataset.hpp"
#include "rtfn/model.hpp"

namespace rtfn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 16;
    int epochs = 200;
    // halve the learning rate after this many epochs without train-loss
    // improvement, never below lr_floor
    int plateau_epochs = 20;
    double lr_floor = 1e-5;
    std::uint64_t seed = 42;

    static TrainConfig supervised_defaults() { return {}; }
    static TrainConfig unsupervised_defaults() {
        TrainConfig cfg;
        cfg.epochs = 100;
        return cfg;
    }

    void validate() const;
};

void apply_train_config_entry(TrainConfig& cfg, const std::string& key,
                              const std::string& value);

// Bias-corrected Adam over every trainable parameter; gradients are zeroed
// after the update. Moment buffers are keyed by registration order, so the
// state must stay paired with one store.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(ParamStore& store, double learning_rate);

    int steps_taken() const { return t_; }

private:
    TrainConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Plateau-halving learning-rate schedule: halve after `patience` epochs
// without train-loss improvement. The rate never increases and never drops
// below the floor.
class PlateauLr {
public:
    PlateauLr(double lr, int patience, double floor)
        : lr_(lr), patience_(patience), floor_(floor) {}

    double rate() const { return lr_; }

    void observe(double loss) {
        if (loss < best_ - 1e-12) {
            best_ = loss;
            stale_ = 0;
        } else if (++stale_ >= patience_) {
            lr_ = std::max(lr_ / 2.0, floor_);
            stale_ = 0;
        }
    }

private:
    double lr_;
    int patience_;
    double floor_;
    double best_ = std::numeric_limits<double>::infinity();
    int stale_ = 0;
};

struct EpochRecord {
    int epoch;
    double loss;
    double accuracy;  // train accuracy; NaN for the autoencoder pipeline
};

// history CSV: "epoch,loss,accuracy" (accuracy column empty when NaN)
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

struct SupervisedResult {
    std::unique_ptr<SupervisedModel> model;
    std::vector<EpochRecord> history;
    double test_accuracy;
};

SupervisedResult train_supervised(const SeriesDataset& dataset, const ModelConfig& mcfg,
                                  const TrainConfig& tcfg);

struct AutoencoderResult {
    std::unique_ptr<AutoencoderModel> model;
    std::vector<EpochRecord> history;  // loss only
};

AutoencoderResult train_autoencoder(const SeriesDataset& dataset, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg);

// Assemble a b×1×t batch (and labels) from dataset samples.
Tensor batch_tensor(const std::vector<Sample>& samples, const std::vector<int>& indices);
std::vector<int> batch_labels(const std::vector<Sample>& samples,
                              const std::vector<int>& indices);

// Eval-mode test accuracy in batches.
double evaluate_accuracy(const SupervisedModel& model, const std::vector<Sample>& samples,
                         int batch_size);

}  // namespace rtfn

#endif

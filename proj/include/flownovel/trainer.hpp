#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flownovel/tape.hpp"
#include "flownovel/timeseries.hpp"

namespace flownovel {

// Training hyperparameters. Defaults are the reference values used across
// all experiments: Adam with learning rate 0.01 and weight decay 0.001,
// batch size 100.
struct TrainConfig {
    int epochs = 100;
    int batch_size = 100;
    double learning_rate = 0.01;
    double weight_decay = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch;
    double train_nll; // mean negative log-likelihood per sample (all dims)
    double val_nll;
};

struct TrainReport {
    std::vector<EpochStats> history; // entry 0 is evaluated before any update
    int dim = 0;

    double initial_train_nll() const { return history.front().train_nll; }
    double final_train_nll() const { return history.back().train_nll; }
    double final_val_nll() const { return history.back().val_nll; }
};

// Builds the mean NLL of `batch` on the tape. The builder must bind the
// model parameters as leaves in exactly the order of the `params` vector
// passed to train_flow and append them to `leaves`.
using NllBuilder =
    std::function<ad::Var(ad::Tape& tape, const ad::Tensor& batch, std::vector<ad::Var>& leaves)>;

// Minibatch Adam loop shared by the flow models. Deterministic under
// config.seed. Throws numeric_error with an epoch/batch diagnostic if the
// loss goes non-finite.
TrainReport train_flow(const std::vector<ad::Tensor*>& params, const NllBuilder& nll,
                       const TimeSeriesBatch& data, const TrainConfig& config);

} // namespace flownovel

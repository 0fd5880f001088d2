#include "flownovel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "flownovel/adam.hpp"
#include "flownovel/rng.hpp"

namespace flownovel {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor gather_rows(const Tensor& data, const std::vector<int>& idx, int begin, int end) {
    int t = data.cols();
    Tensor out({end - begin, t});
    for (int r = begin; r < end; ++r)
        for (int c = 0; c < t; ++c) out.at(r - begin, c) = data.at(idx[r], c);
    return out;
}

double eval_nll(const NllBuilder& nll, const Tensor& data, const std::vector<int>& idx,
                int batch_size) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    int n = static_cast<int>(idx.size());
    for (int begin = 0; begin < n; begin += batch_size) {
        int end = std::min(begin + batch_size, n);
        Tape tape(false);
        std::vector<Var> leaves;
        Var loss = nll(tape, gather_rows(data, idx, begin, end), leaves);
        total += tape.value(loss).item() * (end - begin);
    }
    return total / n;
}

void fisher_yates(std::vector<int>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

} // namespace

TrainReport train_flow(const std::vector<Tensor*>& params, const NllBuilder& nll,
                       const TimeSeriesBatch& data, const TrainConfig& config) {
    if (data.state != PrepState::standardized)
        throw contract_error("train: data must be standardized before training");
    if (data.n() < 2) throw contract_error("train: need at least two samples");
    if (config.batch_size < 1) throw contract_error("train: batch_size must be positive");

    Rng rng(config.seed);

    std::vector<int> all(data.n());
    std::iota(all.begin(), all.end(), 0);
    fisher_yates(all, rng);
    int val_count = static_cast<int>(std::floor(config.validation_fraction * data.n()));
    val_count = std::min(val_count, data.n() - 1);
    std::vector<int> val_idx(all.begin(), all.begin() + val_count);
    std::vector<int> train_idx(all.begin() + val_count, all.end());

    ad::AdamConfig adam_cfg;
    adam_cfg.learning_rate = config.learning_rate;
    adam_cfg.weight_decay = config.weight_decay;
    adam_cfg.beta1 = config.beta1;
    adam_cfg.beta2 = config.beta2;
    adam_cfg.epsilon = config.epsilon;
    ad::Adam adam(adam_cfg);

    TrainReport report;
    report.dim = data.length();
    report.history.push_back({0, eval_nll(nll, data.data, train_idx, config.batch_size),
                              eval_nll(nll, data.data, val_idx, config.batch_size)});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        fisher_yates(train_idx, rng);
        double epoch_nll = 0.0;
        int n = static_cast<int>(train_idx.size());
        for (int begin = 0; begin < n; begin += config.batch_size) {
            int end = std::min(begin + config.batch_size, n);
            Tape tape;
            std::vector<Var> leaves;
            Var loss;
            try {
                loss = nll(tape, gather_rows(data.data, train_idx, begin, end), leaves);
            } catch (const numeric_error& e) {
                throw numeric_error("train: " + std::string(e.what()) + " (epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(begin / config.batch_size) + ")");
            }
            double loss_value = tape.value(loss).item();
            if (!std::isfinite(loss_value))
                throw numeric_error("train: NLL non-finite (epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(begin / config.batch_size) + ")");
            if (leaves.size() != params.size())
                throw contract_error("train: builder bound a different parameter count");
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(leaves.size());
            for (Var leaf : leaves) grads.push_back(tape.grad(leaf));
            adam.step(params, grads);
            epoch_nll += loss_value * (end - begin);
        }
        double val = eval_nll(nll, data.data, val_idx, config.batch_size);
        report.history.push_back({epoch, epoch_nll / n, val});
    }
    return report;
}

} // namespace flownovel

#include "flownovel/maf.hpp"

#include <cmath>
#include <string>

namespace flownovel {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453; // ln(2*pi)
}

MafStack MafStack::build(const MafConfig& config, std::uint64_t seed) {
    if (config.input_dim < 2) throw contract_error("maf: input_dim must be >= 2");
    if (config.num_layers < 1) throw contract_error("maf: need at least one layer");
    MafStack stack;
    stack.config_ = config;
    Rng rng(seed);
    MadeConfig made_cfg;
    made_cfg.input_dim = config.input_dim;
    made_cfg.hidden_sizes = config.hidden_sizes;
    made_cfg.output_multiplier = 2;
    for (int k = 0; k < config.num_layers; ++k)
        stack.layers_.push_back(MadeNetwork::build(made_cfg, rng));
    return stack;
}

MafStack MafStack::from_parts(MafConfig config, std::vector<MadeNetwork> layers,
                              std::optional<Normalizer> normalizer) {
    if (static_cast<int>(layers.size()) != config.num_layers)
        throw data_error("maf: layer count does not match config");
    MafStack stack;
    stack.config_ = std::move(config);
    stack.layers_ = std::move(layers);
    stack.normalizer_ = std::move(normalizer);
    return stack;
}

std::vector<Tensor*> MafStack::parameters() {
    std::vector<Tensor*> out;
    for (MadeNetwork& layer : layers_)
        for (Tensor* p : layer.parameters()) out.push_back(p);
    return out;
}

MafStack::TapeBind MafStack::bind(Tape& tape, bool trainable) const {
    TapeBind b;
    for (const MadeNetwork& layer : layers_) {
        b.layers.push_back(layer.bind(tape, trainable));
        for (Var v : b.layers.back().leaves) b.leaves.push_back(v);
    }
    return b;
}

std::pair<Var, Var> MafStack::forward(Tape& tape, const TapeBind& bind, Var x) const {
    const int d = config_.input_dim;
    const int batch = tape.value(x).rows();
    if (tape.value(x).cols() != d) throw contract_error("maf: input width mismatch");

    Var cur = x;
    Var log_det = tape.constant(Tensor::zeros({batch}));
    for (int k = 0; k < config_.num_layers; ++k) {
        if (k > 0 && config_.flip_between_layers) cur = tape.reverse_cols(cur);
        Var heads = layers_[k].forward(tape, bind.layers[k], cur);
        Var shift = tape.slice_cols(heads, 0, d);
        Var log_scale = tape.slice_cols(heads, d, 2 * d);
        cur = tape.mul(tape.sub(cur, shift), tape.exp(tape.neg(log_scale)));
        log_det = tape.sub(log_det, tape.row_sum(log_scale));
        if (!tape.value(cur).all_finite())
            throw numeric_error("maf: non-finite output at layer " + std::to_string(k));
    }
    return {cur, log_det};
}

Var MafStack::log_prob(Tape& tape, const TapeBind& bind, Var x) const {
    auto [z, log_det] = forward(tape, bind, x);
    const int batch = tape.value(x).rows();
    Var zz = tape.row_sum(tape.mul(z, z));
    Var base = tape.constant(Tensor::full({batch}, -0.5 * config_.input_dim * kLog2Pi));
    return tape.add(tape.axpy(-0.5, zz, base), log_det);
}

std::pair<Tensor, Tensor> MafStack::forward(const Tensor& x) const {
    Tape tape(false);
    TapeBind b = bind(tape, false);
    auto [z, log_det] = forward(tape, b, tape.constant(x));
    return {tape.value(z), tape.value(log_det)};
}

Tensor MafStack::log_prob(const Tensor& x) const {
    Tape tape(false);
    TapeBind b = bind(tape, false);
    Var lp = log_prob(tape, b, tape.constant(x));
    return tape.value(lp);
}

Tensor MafStack::inverse(const Tensor& z) const {
    const int d = config_.input_dim;
    if (z.ndim() != 2 || z.cols() != d) throw contract_error("maf: inverse width mismatch");
    Tensor cur = z;
    for (int k = config_.num_layers - 1; k >= 0; --k) {
        // x_t = z_t * exp(log_scale_t(x_{1:t-1})) + shift_t(x_{1:t-1}),
        // filled left to right; heads at t only read already-final entries
        Tensor x = cur;
        for (int t = 0; t < d; ++t) {
            Tensor heads = layers_[k].forward_plain(x);
            for (int r = 0; r < x.rows(); ++r)
                x.at(r, t) = cur.at(r, t) * std::exp(heads.at(r, d + t)) + heads.at(r, t);
        }
        cur = x;
        if (k > 0 && config_.flip_between_layers) {
            for (int r = 0; r < cur.rows(); ++r)
                for (int c = 0; c < d / 2; ++c) std::swap(cur.at(r, c), cur.at(r, d - 1 - c));
        }
    }
    return cur;
}

Tensor MafStack::sample(int n, std::uint64_t seed) const {
    if (n < 1) throw contract_error("maf: sample count must be >= 1");
    Rng rng(seed);
    Tensor z = Tensor::randn({n, config_.input_dim}, rng);
    return inverse(z);
}

TrainReport MafStack::train(const TimeSeriesBatch& data, const TrainConfig& config) {
    if (data.length() != config_.input_dim)
        throw contract_error("maf: training data width does not match input_dim");
    NllBuilder builder = [this](Tape& tape, const Tensor& batch, std::vector<Var>& leaves) {
        TapeBind b = bind(tape, true);
        leaves = b.leaves;
        Var lp = log_prob(tape, b, tape.constant(batch));
        return tape.neg(tape.mean(lp));
    };
    TrainReport report = train_flow(parameters(), builder, data, config);
    normalizer_ = data.normalizer;
    return report;
}

} // namespace flownovel

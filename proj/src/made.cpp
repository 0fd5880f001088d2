#include "flownovel/made.hpp"

#include <cmath>
#include <utility>

namespace flownovel {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

void validate(const MadeConfig& c) {
    if (c.input_dim < 2) throw contract_error("made: input_dim must be >= 2");
    if (c.hidden_sizes.empty()) throw contract_error("made: hidden_sizes must be nonempty");
    for (int h : c.hidden_sizes)
        if (h < 1) throw contract_error("made: hidden sizes must be positive");
    if (c.output_multiplier < 1) throw contract_error("made: output_multiplier must be >= 1");
    if (c.conditional_dim < 0) throw contract_error("made: conditional_dim must be >= 0");
}

} // namespace

void MadeNetwork::build_masks() {
    const int d = config_.input_dim;
    const int cond = config_.conditional_dim;
    const int layers = static_cast<int>(config_.hidden_sizes.size()) + 1;

    degrees_.clear();
    std::vector<int> in_deg(d + cond);
    for (int i = 0; i < d; ++i) in_deg[i] = i + 1;
    for (int i = 0; i < cond; ++i) in_deg[d + i] = 0;
    degrees_.push_back(in_deg);

    for (int h : config_.hidden_sizes) {
        std::vector<int> deg(h);
        for (int j = 0; j < h; ++j) deg[j] = 1 + j % (d - 1);
        degrees_.push_back(deg);
    }
    std::vector<int> out_deg(output_dim());
    for (int b = 0; b < config_.output_multiplier; ++b)
        for (int t = 0; t < d; ++t) out_deg[b * d + t] = t + 1;
    degrees_.push_back(out_deg);

    masks_.clear();
    for (int l = 0; l < layers; ++l) {
        const std::vector<int>& din = degrees_[l];
        const std::vector<int>& dout = degrees_[l + 1];
        Tensor m({static_cast<int>(din.size()), static_cast<int>(dout.size())});
        bool strict = (l == layers - 1);
        for (std::size_t i = 0; i < din.size(); ++i)
            for (std::size_t j = 0; j < dout.size(); ++j)
                m.at(static_cast<int>(i), static_cast<int>(j)) =
                    (strict ? dout[j] > din[i] : dout[j] >= din[i]) ? 1.0 : 0.0;
        masks_.push_back(std::move(m));
    }
}

MadeNetwork MadeNetwork::build(const MadeConfig& config, Rng& rng) {
    validate(config);
    MadeNetwork net;
    net.config_ = config;
    net.build_masks();

    std::vector<int> widths;
    widths.push_back(config.input_dim + config.conditional_dim);
    for (int h : config.hidden_sizes) widths.push_back(h);
    widths.push_back(net.output_dim());

    const int layers = static_cast<int>(widths.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        int fan_in = widths[l], fan_out = widths[l + 1];
        Tensor w({fan_in, fan_out});
        if (l < layers - 1) {
            double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
            // zero out masked entries so serialized weights carry no noise
            for (std::size_t i = 0; i < w.numel(); ++i) w[i] *= net.masks_[l][i];
        }
        // final layer stays zero: the flow starts at the identity map
        net.weights_.push_back(std::move(w));
        net.biases_.push_back(Tensor({fan_out}));
    }
    if (config.conditional_dim > 0)
        net.cond_skip_ = Tensor({config.conditional_dim, net.output_dim()});
    return net;
}

MadeNetwork MadeNetwork::from_parts(const MadeConfig& config, std::vector<Tensor> weights,
                                    std::vector<Tensor> biases, Tensor conditional_skip) {
    validate(config);
    MadeNetwork net;
    net.config_ = config;
    net.build_masks();
    if (weights.size() != net.masks_.size() || biases.size() != net.masks_.size())
        throw data_error("made: layer count does not match config");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].same_shape(net.masks_[l]))
            throw data_error("made: weight shape does not match config");
        if (biases[l].numel() != static_cast<std::size_t>(net.masks_[l].cols()))
            throw data_error("made: bias length does not match config");
    }
    net.weights_ = std::move(weights);
    net.biases_ = std::move(biases);
    if (config.conditional_dim > 0) {
        if (conditional_skip.ndim() != 2 || conditional_skip.rows() != config.conditional_dim ||
            conditional_skip.cols() != net.output_dim())
            throw data_error("made: conditional skip shape does not match config");
        net.cond_skip_ = std::move(conditional_skip);
    }
    return net;
}

std::vector<Tensor*> MadeNetwork::parameters() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    if (config_.conditional_dim > 0) out.push_back(&cond_skip_);
    return out;
}

std::vector<const Tensor*> MadeNetwork::parameters() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    if (config_.conditional_dim > 0) out.push_back(&cond_skip_);
    return out;
}

MadeNetwork::TapeParams MadeNetwork::bind(Tape& tape, bool trainable) const {
    TapeParams p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Var w = tape.leaf(weights_[l], trainable);
        Var b = tape.leaf(biases_[l], trainable);
        p.leaves.push_back(w);
        p.leaves.push_back(b);
        p.masked_weights.push_back(tape.mul(w, tape.constant(masks_[l])));
        p.biases.push_back(b);
    }
    if (config_.conditional_dim > 0) {
        p.conditional_skip = tape.leaf(cond_skip_, trainable);
        p.leaves.push_back(p.conditional_skip);
    }
    return p;
}

Var MadeNetwork::forward(Tape& tape, const TapeParams& params, Var x,
                         std::optional<Var> cond) const {
    const Tensor& vx = tape.value(x);
    if (vx.ndim() != 2 || vx.cols() != config_.input_dim)
        throw contract_error("made: input must be [batch, input_dim]");
    if (config_.conditional_dim > 0) {
        if (!cond) throw contract_error("made: conditional input required");
        if (tape.value(*cond).cols() != config_.conditional_dim)
            throw contract_error("made: conditional width mismatch");
    } else if (cond) {
        throw contract_error("made: network has no conditional inputs");
    }

    Var h = cond ? tape.concat_cols(x, *cond) : x;
    const int layers = num_layers();
    for (int l = 0; l < layers; ++l) {
        h = tape.linear(h, params.masked_weights[l], params.biases[l]);
        if (l < layers - 1) h = tape.tanh(h);
    }
    if (cond) h = tape.add(h, tape.matmul(*cond, params.conditional_skip));
    return h;
}

Tensor MadeNetwork::forward_plain(const Tensor& x, const Tensor* cond) const {
    Tape tape(false);
    TapeParams p = bind(tape, false);
    Var vx = tape.constant(x);
    std::optional<Var> vc;
    if (cond) vc = tape.constant(*cond);
    Var out = forward(tape, p, vx, vc);
    return tape.value(out);
}

} // namespace flownovel

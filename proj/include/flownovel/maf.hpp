#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "flownovel/made.hpp"
#include "flownovel/timeseries.hpp"
#include "flownovel/trainer.hpp"

namespace flownovel {

struct MafConfig {
    int input_dim = 100;
    int num_layers = 5; // K affine autoregressive layers
    std::vector<int> hidden_sizes = {256, 256, 256};
    bool flip_between_layers = true;
};

// Masked Autoregressive Flow: a stack of K affine layers whose shift and
// log-scale heads come from MADE networks, mapping data x to base noise
// z ~ N(0, I). The density direction x -> z runs one parallel MADE pass per
// layer; sampling inverts each layer sequentially over timepoints (D MADE
// passes per layer).
//
// Per layer: z_t = (x_t - shift_t(x_{1:t-1})) * exp(-log_scale_t(x_{1:t-1})),
// contributing -sum_t log_scale_t to the log-determinant. The log-scale
// parameterization keeps every layer invertible by construction.
//
// Timepoint order is reversed between layers (default on): without flips no
// layer ever transforms the first timepoint data-dependently.
class MafStack {
public:
    MafStack() = default;

    static MafStack build(const MafConfig& config, std::uint64_t seed);
    static MafStack from_parts(MafConfig config, std::vector<MadeNetwork> layers,
                               std::optional<Normalizer> normalizer);

    const MafConfig& config() const { return config_; }
    int input_dim() const { return config_.input_dim; }
    const std::vector<MadeNetwork>& layers() const { return layers_; }

    const std::optional<Normalizer>& normalizer() const { return normalizer_; }
    void set_normalizer(std::optional<Normalizer> n) { normalizer_ = std::move(n); }

    std::vector<ad::Tensor*> parameters();

    struct TapeBind {
        std::vector<MadeNetwork::TapeParams> layers;
        std::vector<ad::Var> leaves;
    };
    TapeBind bind(ad::Tape& tape, bool trainable) const;

    // density direction on a tape: x [B,D] -> (z [B,D], log_det [B])
    std::pair<ad::Var, ad::Var> forward(ad::Tape& tape, const TapeBind& bind, ad::Var x) const;
    ad::Var log_prob(ad::Tape& tape, const TapeBind& bind, ad::Var x) const;

    // plain inference paths
    std::pair<ad::Tensor, ad::Tensor> forward(const ad::Tensor& x) const;
    ad::Tensor log_prob(const ad::Tensor& x) const;
    ad::Tensor inverse(const ad::Tensor& z) const;
    ad::Tensor sample(int n, std::uint64_t seed) const;

    // minimizes mean negative log-likelihood; adopts the batch normalizer
    TrainReport train(const TimeSeriesBatch& data, const TrainConfig& config);

private:
    MafConfig config_;
    std::vector<MadeNetwork> layers_;
    std::optional<Normalizer> normalizer_;
};

} // namespace flownovel

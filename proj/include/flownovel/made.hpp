#pragma once

#include <optional>
#include <vector>

#include "flownovel/rng.hpp"
#include "flownovel/tape.hpp"
#include "flownovel/tensor.hpp"

namespace flownovel {

struct MadeConfig {
    int input_dim = 100;                        // D, number of timepoints
    std::vector<int> hidden_sizes = {256, 256, 256};
    int output_multiplier = 2;                  // 2 for scale+shift heads, 1 for a drift
    int conditional_dim = 0;                    // unmasked extra inputs (pseudo-time)
};

// Masked MLP enforcing the autoregressive property over timepoints: output
// head k for timepoint t is a function of inputs 1..t-1 only. Conditional
// inputs are unmasked and may feed every unit.
//
// Degrees: inputs carry 1..D in natural time order (the data is a time
// series; permuting would destroy the temporal semantics), hidden units
// cycle through 1..D-1, output block b column t carries degree t. Hidden
// masks connect degree_out >= degree_in, the output layer strictly
// degree_out > degree_in. Conditional inputs carry degree 0 and therefore
// pass every mask.
//
// Output heads for multiplier m are m contiguous blocks of D columns.
//
// Conditional inputs additionally get an unmasked skip connection straight
// to the output layer: the strict output mask leaves head 1 with no hidden
// fan-in, so without the skip pseudo-time could never reach it.
class MadeNetwork {
public:
    MadeNetwork() = default;

    static MadeNetwork build(const MadeConfig& config, Rng& rng);
    static MadeNetwork build(const MadeConfig& config, std::uint64_t seed) {
        Rng rng(seed);
        return build(config, rng);
    }

    // reassemble from serialized parts; masks/degrees are validated against
    // the config's mask rules
    static MadeNetwork from_parts(const MadeConfig& config,
                                  std::vector<ad::Tensor> weights,
                                  std::vector<ad::Tensor> biases,
                                  ad::Tensor conditional_skip = {});

    const MadeConfig& config() const { return config_; }
    int input_dim() const { return config_.input_dim; }
    int output_dim() const { return config_.input_dim * config_.output_multiplier; }
    int num_layers() const { return static_cast<int>(weights_.size()); }

    // mutable parameter pointers in a fixed order (w0, b0, w1, b1, ...,
    // then the conditional skip when present)
    std::vector<ad::Tensor*> parameters();
    std::vector<const ad::Tensor*> parameters() const;
    const std::vector<ad::Tensor>& masks() const { return masks_; }
    const std::vector<std::vector<int>>& degrees() const { return degrees_; }
    const ad::Tensor& conditional_skip() const { return cond_skip_; }

    // Parameters bound onto a tape. `leaves` matches the parameters() order;
    // weights are re-masked once per tape so repeated forward passes share
    // the masked weight nodes.
    struct TapeParams {
        std::vector<ad::Var> leaves;
        std::vector<ad::Var> masked_weights;
        std::vector<ad::Var> biases;
        ad::Var conditional_skip; // invalid when conditional_dim == 0
    };

    TapeParams bind(ad::Tape& tape, bool trainable) const;

    // x: [batch, D]; cond: [batch, conditional_dim] when the net has one.
    // Returns [batch, D * output_multiplier].
    ad::Var forward(ad::Tape& tape, const TapeParams& params, ad::Var x,
                    std::optional<ad::Var> cond = std::nullopt) const;

    // inference convenience: runs on a non-recording tape
    ad::Tensor forward_plain(const ad::Tensor& x, const ad::Tensor* cond = nullptr) const;

private:
    MadeConfig config_;
    std::vector<ad::Tensor> weights_; // [fan_in, fan_out] per layer
    std::vector<ad::Tensor> biases_;  // [fan_out]
    std::vector<ad::Tensor> masks_;   // binary, same shapes as weights_
    ad::Tensor cond_skip_;            // [conditional_dim, out_dim], unmasked
    std::vector<std::vector<int>> degrees_; // input (incl. conditional 0s), hiddens, output

    void build_masks();
};

} // namespace flownovel

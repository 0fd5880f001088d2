#pragma once

// Shared helpers for the test suites.

#include "flownovel/made.hpp"

namespace testutil {

// Networks are built with a zero final layer so flows start at the
// identity; structural tests want a generic nonzero map instead.
inline void randomize_made(flownovel::MadeNetwork& net, flownovel::Rng& rng,
                           double scale = 0.6) {
    auto params = net.parameters();
    const auto& masks = net.masks();
    for (std::size_t l = 0; l < masks.size(); ++l) {
        flownovel::ad::Tensor& w = *params[2 * l];
        for (std::size_t i = 0; i < w.numel(); ++i)
            w[i] = rng.uniform(-scale, scale) * masks[l][i];
        flownovel::ad::Tensor& b = *params[2 * l + 1];
        for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform(-0.1, 0.1);
    }
    if (params.size() > 2 * masks.size()) {
        flownovel::ad::Tensor& skip = *params.back();
        for (std::size_t i = 0; i < skip.numel(); ++i) skip[i] = rng.uniform(-scale, scale);
    }
}

} // namespace testutil

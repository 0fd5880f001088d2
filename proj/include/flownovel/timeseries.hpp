#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flownovel/tensor.hpp"

namespace flownovel {

enum class Label { normal, abnormal, unknown };

enum class PrepState { raw, subsampled, windowed, standardized };

// Per-timestep standardization statistics, computed from training data only.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;
    bool operator==(const Normalizer&) const = default;
};

// A set of samples over a common time axis, one sample per row, with the
// provenance needed to keep the preprocessing pipeline honest.
struct TimeSeriesBatch {
    ad::Tensor data; // [n_samples, T]
    Label label = Label::unknown;
    std::optional<double> tau;
    PrepState state = PrepState::raw;
    std::optional<Normalizer> normalizer; // set once standardized

    int n() const { return data.rows(); }
    int length() const { return data.cols(); }
};

std::string to_string(Label label);
Label label_from_string(const std::string& s);
std::string to_string(PrepState state);
PrepState prep_state_from_string(const std::string& s);

} // namespace flownovel

#include "flownovel/timeseries.hpp"

#include "flownovel/errors.hpp"

namespace flownovel {

std::string to_string(Label label) {
    switch (label) {
        case Label::normal: return "normal";
        case Label::abnormal: return "abnormal";
        default: return "unknown";
    }
}

Label label_from_string(const std::string& s) {
    if (s == "normal") return Label::normal;
    if (s == "abnormal") return Label::abnormal;
    if (s == "unknown") return Label::unknown;
    throw data_error("unknown label: " + s);
}

std::string to_string(PrepState state) {
    switch (state) {
        case PrepState::raw: return "raw";
        case PrepState::subsampled: return "subsampled";
        case PrepState::windowed: return "windowed";
        default: return "standardized";
    }
}

PrepState prep_state_from_string(const std::string& s) {
    if (s == "raw") return PrepState::raw;
    if (s == "subsampled") return PrepState::subsampled;
    if (s == "windowed") return PrepState::windowed;
    if (s == "standardized") return PrepState::standardized;
    throw data_error("unknown preprocessing state: " + s);
}

} // namespace flownovel

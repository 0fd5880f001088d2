#include "flownovel/ode.hpp"

#include <algorithm>
#include <cmath>

namespace flownovel::ode {

using ad::Tensor;

namespace {

bool row_finite(const Tensor& m, int r) {
    for (int c = 0; c < m.cols(); ++c)
        if (!std::isfinite(m.at(r, c))) return false;
    return true;
}

void zero_row(Tensor& m, int r) {
    for (int c = 0; c < m.cols(); ++c) m.at(r, c) = 0.0;
}

// freeze rows that went non-finite in state or accumulator
void contain(Tensor& state, Tensor& acc, std::vector<bool>& diverged) {
    for (int r = 0; r < state.rows(); ++r) {
        if (diverged[r]) continue;
        if (!row_finite(state, r) || !std::isfinite(acc[r])) {
            diverged[r] = true;
            zero_row(state, r);
            acc[r] = 0.0;
        }
    }
}

void axpy_rows(Tensor& out, const Tensor& x, double alpha, const std::vector<bool>& skip) {
    for (int r = 0; r < out.rows(); ++r) {
        if (skip[r]) continue;
        for (int c = 0; c < out.cols(); ++c) out.at(r, c) += alpha * x.at(r, c);
    }
}

} // namespace

IntegrationResult integrate_rk4(const Drift& drift, Tensor state, double t_from, double t_to,
                                int step_count) {
    if (step_count < 1) throw contract_error("ode: step_count must be >= 1");
    const int batch = state.rows();
    const double h = (t_to - t_from) / step_count;

    IntegrationResult res;
    res.trace_integral = Tensor::zeros({batch});
    res.diverged.assign(batch, false);
    contain(state, res.trace_integral, res.diverged);

    for (int i = 0; i < step_count; ++i) {
        double t = t_from + i * h;
        auto [k1, tr1] = drift(state, t);

        Tensor z2 = state;
        axpy_rows(z2, k1, 0.5 * h, res.diverged);
        auto [k2, tr2] = drift(z2, t + 0.5 * h);

        Tensor z3 = state;
        axpy_rows(z3, k2, 0.5 * h, res.diverged);
        auto [k3, tr3] = drift(z3, t + 0.5 * h);

        Tensor z4 = state;
        axpy_rows(z4, k3, h, res.diverged);
        auto [k4, tr4] = drift(z4, t + h);

        for (int r = 0; r < batch; ++r) {
            if (res.diverged[r]) continue;
            for (int c = 0; c < state.cols(); ++c)
                state.at(r, c) += h / 6.0 *
                                  (k1.at(r, c) + 2.0 * k2.at(r, c) + 2.0 * k3.at(r, c) +
                                   k4.at(r, c));
            res.trace_integral[r] += h / 6.0 * (tr1[r] + 2.0 * tr2[r] + 2.0 * tr3[r] + tr4[r]);
        }
        contain(state, res.trace_integral, res.diverged);
        ++res.steps_taken;
    }
    res.state = std::move(state);
    return res;
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// embedded 4th-order error coefficients (y5 - y4)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

} // namespace

IntegrationResult integrate_dopri5(const Drift& drift, Tensor state, double t_from, double t_to,
                                   double rtol, double atol, int max_steps) {
    if (rtol <= 0 || atol <= 0) throw contract_error("ode: tolerances must be positive");
    if (max_steps < 1) throw contract_error("ode: max_steps must be >= 1");
    const int batch = state.rows();
    const int d = state.cols();
    const double span = t_to - t_from;
    const double dir = span >= 0 ? 1.0 : -1.0;

    IntegrationResult res;
    res.trace_integral = Tensor::zeros({batch});
    res.diverged.assign(batch, false);
    contain(state, res.trace_integral, res.diverged);

    double t = t_from;
    double h = span / 50.0;
    auto [k1, tr1] = drift(state, t); // FSAL pair carried across steps

    auto stage_state = [&](const std::vector<const Tensor*>& ks, const std::vector<double>& cs) {
        Tensor z = state;
        for (std::size_t j = 0; j < ks.size(); ++j) axpy_rows(z, *ks[j], h * cs[j], res.diverged);
        return z;
    };

    while (dir * (t_to - t) > 1e-14 * std::abs(span)) {
        if (res.steps_taken >= max_steps) break;
        if (std::abs(h) < 1e-14 * std::abs(span)) break;
        if (dir * (t + h) > dir * t_to) h = t_to - t;

        auto [k2, tr2] = drift(stage_state({&k1}, {a21}), t + c2 * h);
        auto [k3, tr3] = drift(stage_state({&k1, &k2}, {a31, a32}), t + c3 * h);
        auto [k4, tr4] = drift(stage_state({&k1, &k2, &k3}, {a41, a42, a43}), t + c4 * h);
        auto [k5, tr5] = drift(stage_state({&k1, &k2, &k3, &k4}, {a51, a52, a53, a54}), t + c5 * h);
        auto [k6, tr6] =
            drift(stage_state({&k1, &k2, &k3, &k4, &k5}, {a61, a62, a63, a64, a65}), t + h);

        // 5th-order proposal (also stage 7 input for FSAL)
        Tensor z_new = state;
        Tensor acc_new = res.trace_integral;
        for (int r = 0; r < batch; ++r) {
            if (res.diverged[r]) continue;
            for (int c = 0; c < d; ++c)
                z_new.at(r, c) += h * (b1 * k1.at(r, c) + b3 * k3.at(r, c) + b4 * k4.at(r, c) +
                                       b5 * k5.at(r, c) + b6 * k6.at(r, c));
            acc_new[r] += h * (b1 * tr1[r] + b3 * tr3[r] + b4 * tr4[r] + b5 * tr5[r] + b6 * tr6[r]);
        }
        auto [k7, tr7] = drift(z_new, t + h);

        // per-sample scaled error norm; rows that go non-finite are frozen
        double err = 0.0;
        bool any_active = false;
        std::vector<bool> newly_dead(batch, false);
        for (int r = 0; r < batch; ++r) {
            if (res.diverged[r]) continue;
            double sum_sq = 0.0;
            for (int c = 0; c < d; ++c) {
                double e = h * (e1 * k1.at(r, c) + e3 * k3.at(r, c) + e4 * k4.at(r, c) +
                                e5 * k5.at(r, c) + e6 * k6.at(r, c) + e7 * k7.at(r, c));
                double scale =
                    atol + rtol * std::max(std::abs(state.at(r, c)), std::abs(z_new.at(r, c)));
                sum_sq += (e / scale) * (e / scale);
            }
            double row_err = std::sqrt(sum_sq / d);
            if (!std::isfinite(row_err) || !row_finite(z_new, r)) {
                newly_dead[r] = true;
                continue;
            }
            err = std::max(err, row_err);
            any_active = true;
        }
        for (int r = 0; r < batch; ++r) {
            if (!newly_dead[r]) continue;
            res.diverged[r] = true;
            zero_row(state, r);
            zero_row(z_new, r);
            zero_row(k7, r);
            res.trace_integral[r] = 0.0;
            acc_new[r] = 0.0;
            tr7[r] = 0.0;
        }
        ++res.steps_taken;
        if (!any_active) { t = t_to; break; } // every sample diverged

        if (err <= 1.0) { // accept
            t += h;
            state = std::move(z_new);
            res.trace_integral = std::move(acc_new);
            k1 = std::move(k7);
            tr1 = std::move(tr7);
        }
        double factor = err <= 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
        h *= std::clamp(factor, 0.2, 5.0);
    }

    // ran out of steps: whoever is still en route counts as diverged
    if (dir * (t_to - t) > 1e-14 * std::abs(span)) {
        for (int r = 0; r < batch; ++r) {
            if (res.diverged[r]) continue;
            res.diverged[r] = true;
            zero_row(state, r);
            res.trace_integral[r] = 0.0;
        }
    }
    res.state = std::move(state);
    return res;
}

} // namespace flownovel::ode

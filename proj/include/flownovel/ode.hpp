#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "flownovel/tensor.hpp"

namespace flownovel::ode {

// Batched drift evaluation: given state z [B,D] and pseudo-time t, returns
// dz/dt [B,D] and the Jacobian trace per sample [B]. Rows are independent:
// a non-finite row must not influence any other row, which the callers rely
// on for per-sample divergence containment.
using Drift = std::function<std::pair<ad::Tensor, ad::Tensor>(const ad::Tensor&, double)>;

struct IntegrationResult {
    ad::Tensor state;            // [B,D] at t_to (diverged rows zeroed)
    ad::Tensor trace_integral;   // [B], integral of the trace along the direction of travel
    std::vector<bool> diverged;  // per sample
    int steps_taken = 0;
};

// Classic fixed-step RK4 over [t_from, t_to] (either direction). After each
// step, rows containing non-finite values are frozen at zero, flagged, and
// excluded from further work.
IntegrationResult integrate_rk4(const Drift& drift, ad::Tensor state, double t_from, double t_to,
                                int step_count);

// Adaptive Dormand-Prince 5(4) with per-sample error norms. A row whose
// error estimate goes non-finite is frozen and flagged rather than stalling
// the whole batch; if max_steps runs out, the still-active rows are flagged
// as diverged.
IntegrationResult integrate_dopri5(const Drift& drift, ad::Tensor state, double t_from,
                                   double t_to, double rtol, double atol, int max_steps);

} // namespace flownovel::ode

#include "flownovel/cnf.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace flownovel {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

CnfModel CnfModel::build(const CnfConfig& config, std::uint64_t seed) {
    if (config.input_dim < 2) throw contract_error("cnf: input_dim must be >= 2");
    if (config.t1 <= config.t0) throw contract_error("cnf: t1 must exceed t0");
    CnfModel model;
    model.config_ = config;
    MadeConfig made_cfg;
    made_cfg.input_dim = config.input_dim;
    made_cfg.hidden_sizes = config.hidden_sizes;
    made_cfg.output_multiplier = config.diagonal_head ? 2 : 1;
    made_cfg.conditional_dim = 1;
    model.drift_ = MadeNetwork::build(made_cfg, seed);
    return model;
}

CnfModel CnfModel::from_parts(CnfConfig config, MadeNetwork drift,
                              std::optional<Normalizer> normalizer) {
    int want_mult = config.diagonal_head ? 2 : 1;
    if (drift.config().output_multiplier != want_mult || drift.config().conditional_dim != 1 ||
        drift.config().input_dim != config.input_dim)
        throw data_error("cnf: drift network does not match config");
    CnfModel model;
    model.config_ = std::move(config);
    model.drift_ = std::move(drift);
    model.normalizer_ = std::move(normalizer);
    return model;
}

std::pair<Var, Var> CnfModel::drift(Tape& tape, const MadeNetwork::TapeParams& params, Var z,
                                    double t) const {
    const int d = config_.input_dim;
    const int batch = tape.value(z).rows();
    double scaled = (t - config_.t0) / (config_.t1 - config_.t0);
    Var tcol = tape.constant(Tensor::full({batch, 1}, scaled));
    Var heads = drift_.forward(tape, params, z, tcol);
    if (!config_.diagonal_head)
        return {heads, tape.constant(Tensor::zeros({batch}))};
    Var f = tape.slice_cols(heads, 0, d);
    Var diag = tape.slice_cols(heads, d, 2 * d);
    Var dz = tape.add(f, tape.mul(diag, z));
    Var trace = tape.row_sum(diag);
    return {dz, trace};
}

std::pair<Tensor, Tensor> CnfModel::drift_plain(const Tensor& z, double t) const {
    Tape tape(false);
    MadeNetwork::TapeParams params = drift_.bind(tape, false);
    auto [dz, trace] = drift(tape, params, tape.constant(z), t);
    return {tape.value(dz), tape.value(trace)};
}

Var CnfModel::log_prob(Tape& tape, const MadeNetwork::TapeParams& params, Var x) const {
    const int d = config_.input_dim;
    const int batch = tape.value(x).rows();
    if (tape.value(x).cols() != d) throw contract_error("cnf: input width mismatch");

    const int steps = config_.solver.step_count;
    const double h = (config_.t0 - config_.t1) / steps; // backward in pseudo-time

    Var z = x;
    Var acc = tape.constant(Tensor::zeros({batch}));
    for (int i = 0; i < steps; ++i) {
        double t = config_.t1 + i * h;
        auto [k1, tr1] = drift(tape, params, z, t);
        auto [k2, tr2] = drift(tape, params, tape.axpy(0.5 * h, k1, z), t + 0.5 * h);
        auto [k3, tr3] = drift(tape, params, tape.axpy(0.5 * h, k2, z), t + 0.5 * h);
        auto [k4, tr4] = drift(tape, params, tape.axpy(h, k3, z), t + h);
        Var ksum = tape.add(tape.add(k1, k4), tape.scale(tape.add(k2, k3), 2.0));
        z = tape.axpy(h / 6.0, ksum, z);
        Var tsum = tape.add(tape.add(tr1, tr4), tape.scale(tape.add(tr2, tr3), 2.0));
        acc = tape.axpy(h / 6.0, tsum, acc);
        if (!tape.value(z).all_finite())
            throw numeric_error("cnf: integration diverged at step " + std::to_string(i) +
                                " (t=" + std::to_string(t + h) + ")");
    }
    // log p(x) = log N(z(t0); 0, I) + integral of trace accumulated backward
    Var zz = tape.row_sum(tape.mul(z, z));
    Var base = tape.constant(Tensor::full({batch}, -0.5 * d * kLog2Pi));
    return tape.add(tape.axpy(-0.5, zz, base), acc);
}

ode::IntegrationResult CnfModel::integrate(Tensor state, double from, double to) const {
    ode::Drift drift_fn = [this](const Tensor& z, double t) { return drift_plain(z, t); };
    const SolverConfig& s = config_.solver;
    if (s.method == SolverConfig::Method::dopri5_adaptive)
        return ode::integrate_dopri5(drift_fn, std::move(state), from, to, s.rtol, s.atol,
                                     s.max_steps);
    return ode::integrate_rk4(drift_fn, std::move(state), from, to, s.step_count);
}

CnfModel::ScoreResult CnfModel::log_prob(const Tensor& x) const {
    const int d = config_.input_dim;
    if (x.ndim() != 2 || x.cols() != d) throw contract_error("cnf: input width mismatch");
    ode::IntegrationResult ir = integrate(x, config_.t1, config_.t0);

    ScoreResult out;
    out.diverged = ir.diverged;
    out.log_prob = Tensor::zeros({x.rows()});
    for (int r = 0; r < x.rows(); ++r) {
        if (ir.diverged[r]) {
            out.log_prob[r] = -std::numeric_limits<double>::infinity();
            continue;
        }
        double zz = 0.0;
        for (int c = 0; c < d; ++c) zz += ir.state.at(r, c) * ir.state.at(r, c);
        double lp = -0.5 * d * kLog2Pi - 0.5 * zz + ir.trace_integral[r];
        if (!std::isfinite(lp)) {
            out.diverged[r] = true;
            lp = -std::numeric_limits<double>::infinity();
        }
        out.log_prob[r] = lp;
    }
    return out;
}

CnfModel::SampleResult CnfModel::sample(int n, std::uint64_t seed) const {
    if (n < 1) throw contract_error("cnf: sample count must be >= 1");
    Rng rng(seed);
    Tensor z = Tensor::randn({n, config_.input_dim}, rng);
    ode::IntegrationResult ir = integrate(std::move(z), config_.t0, config_.t1);
    return {std::move(ir.state), std::move(ir.diverged)};
}

TrainReport CnfModel::train(const TimeSeriesBatch& data, const TrainConfig& config) {
    if (data.length() != config_.input_dim)
        throw contract_error("cnf: training data width does not match input_dim");
    NllBuilder builder = [this](Tape& tape, const Tensor& batch, std::vector<Var>& leaves) {
        MadeNetwork::TapeParams params = drift_.bind(tape, true);
        leaves = params.leaves;
        Var lp = log_prob(tape, params, tape.constant(batch));
        return tape.neg(tape.mean(lp));
    };
    TrainReport report = train_flow(parameters(), builder, data, config);
    normalizer_ = data.normalizer;
    return report;
}

} // namespace flownovel

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/filters.hpp"
#include "gqef/graphs.hpp"
#include "gqef/qef.hpp"
#include "gqef/quant.hpp"

namespace gqef {

enum class MsdMode { Unbiased, Biased };
const char* to_string(MsdMode m);
MsdMode msd_mode_from_string(const std::string& s);

struct ScenarioConfig {
    Scenario scenario = Scenario::FirDet;
    ShiftOperator shift;
    FirSpec fir;
    IirSpec iir;
    QuantizerConfig quant;
    /// Edge retention (FirRandom, IirRandom) or node selection (IirAsync).
    double p = 1.0;
    int trials = 1000;
    /// IIR iterations; FIR always runs T steps.
    int iters = 300;
    std::uint64_t seed = 1;
    MsdMode msd_mode = MsdMode::Unbiased;
    /// Peak of the noiseless quantized states relative to the quantizer range.
    double headroom = 0.5;
    int threads = 1;
    bool quantize = true;
    /// FIR only: replays each step's realized noise to split the output noise per step.
    bool record_step_noise = false;
    /// Overrides the generated input (no rescaling is applied).
    std::optional<Vector> input;

    void validate() const;
};

/// One feedback configuration simulated in lock-step with the others.
/// An empty theta means no feedback.
struct Lane {
    std::string name;
    CMatrix theta;
};

struct LaneResult {
    std::string name;
    Vector msd;        ///< mean over trials per index
    Vector msd_stderr; ///< standard error per index
    double steady = 0.0;
    double steady_stderr = 0.0;
    /// Per-trial steady value (mean of the last 10% of indices, or the FIR terminal value).
    std::vector<double> trial_steady;
    /// FIR with record_step_noise: empirical output noise power per source step.
    Vector step_noise;
};

struct ScenarioResult {
    Scenario scenario = Scenario::FirDet;
    std::vector<int> index; ///< iteration numbers (IIR) or {T} (FIR)
    std::vector<LaneResult> lanes;
    int trials = 0;
    std::uint64_t seed = 0;
    std::uint64_t overflow = 0;
    double wall_seconds = 0.0;
    Vector input;

    const LaneResult& lane(const std::string& name) const;
};

/// Generated input: uniform graph spectrum (U times random signs) for
/// symmetric operators, Gaussian otherwise, scaled to the configured headroom.
Vector scenario_input(const ScenarioConfig& cfg);

/// Noise budget matching the quantizer for the configured filter.
NoiseBudget scenario_budget(const ScenarioConfig& cfg);
/// Optimal plan for the configured scenario.
FeedbackPlan scenario_plan(const ScenarioConfig& cfg);
/// {"none", "qef"} lanes.
std::vector<Lane> default_lanes(const ScenarioConfig& cfg);

ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::vector<Lane>& lanes);

struct OrderPoint {
    int order = 0;
    FeedbackPlan plan;
    ScenarioResult result;
};

/// Runs the FIR scenario for each order with coefficients from `design`.
std::vector<OrderPoint> sweep_orders(const ScenarioConfig& cfg, const std::vector<int>& orders,
                                     const std::function<FirSpec(int)>& design);

/// Var[y] per node of the noiseless random-graph recursion around the
/// expected-graph output (the biased-MSD floor).
double empirical_variance_floor(const ScenarioConfig& cfg);

inline double to_db(double v) { return 10.0 * std::log10(v); }

} // namespace gqef

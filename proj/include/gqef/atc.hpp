#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/graphs.hpp"
#include "gqef/qef.hpp"
#include "gqef/quant.hpp"

namespace gqef {

/// Decentralized least squares: node i holds (A_i, b_i) and estimates x_i,
/// with a Laplacian smoothness penalty eta x^T (L (x) I) x.
struct RegressionProblem {
    Graph graph;
    Matrix laplacian;
    int rows = 40; ///< L, observations per node
    int dim = 4;   ///< M
    double eta = 10.0;
    double mu = 0.01;
    int smoothing_modes = 0; ///< graph frequencies kept in x*
    std::vector<Matrix> A;
    std::vector<Vector> b;
    Matrix x_star; ///< N x M, row i is x*_i
    Matrix combine; ///< I - mu eta L

    int nodes() const { return graph.size(); }
    /// (I - mu eta L) (x) I_M.
    Matrix A_script() const;
    /// blkdiag(I - mu A_i^T A_i).
    Matrix B_script() const;
    /// xi_i = x_i - mu grad f_i(x_i) in the generic gradient form.
    Vector gradient_step(int i, const Vector& x) const;
};

/// Gaussian data on a given graph; x* keeps the lowest ceil(N/4) Laplacian modes.
RegressionProblem synth_problem(const Graph& g, int L, int M, std::uint64_t seed, double eta = 10.0,
                                double mu = 0.01);

enum class AtcVariant { Uncompressed, FullState, Differential, DiffErrorFeedback, Qef };
const char* to_string(AtcVariant v);
AtcVariant atc_variant_from_string(const std::string& s);

struct AtcConfig {
    int iters = 1500;
    int trials = 50;
    std::uint64_t seed = 1;
    QuantizerConfig quant;
    RateModel rate = RateModel::variable();
    double def_damping = 0.6;
    int threads = 1;

    /// Probabilistic quantizer with step 10 mu and a range wide enough to never clamp.
    static AtcConfig standard(double mu = 0.01);
    void validate() const;
};

struct AtcLaneResult {
    AtcVariant variant = AtcVariant::Uncompressed;
    Vector msd;
    Vector msd_stderr;
    double steady = 0.0;
    double steady_stderr = 0.0;
    std::vector<double> trial_steady;
    double rate = 0.0; ///< bits per node per component; NaN when uncompressed
};

struct AtcResult {
    std::vector<AtcLaneResult> lanes;
    FeedbackPlan plan;
    std::uint64_t overflow = 0;
    double wall_seconds = 0.0;

    const AtcLaneResult& lane(AtcVariant v) const;
};

AtcResult atc_run(const RegressionProblem& problem, const std::vector<AtcVariant>& variants, const AtcConfig& cfg);

struct NoiseGain {
    double without = 0.0; ///< tr(A^T B^T W B A)
    double with = 0.0;    ///< tr((A - D)^T B^T W B (A - D))
    double ratio = 0.0;
};

NoiseGain noise_gain_trace(const RegressionProblem& problem, const FeedbackPlan& plan);

} // namespace gqef

#pragma once

#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/filters.hpp"
#include "gqef/gramians.hpp"
#include "gqef/quant.hpp"

namespace gqef {

enum class Scenario { FirDet, IirDet, FirRandom, IirRandom, IirAsync, AtcRegression };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
bool is_fir(Scenario s);

/// Per-column noise variances (one per FIR step t-1 or IIR branch k).
struct NoiseBudget {
    Vector sigma2;
    int n_nodes = 0;

    static NoiseBudget uniform(int n_nodes, int columns, double sigma2);
    void validate(int columns) const;
};

/// Quantizer noise variance per sorted IIR branch: step^2/12 for real
/// branches, doubled for complex ones.
NoiseBudget iir_noise_budget(const IirSpec& f, const QuantizerConfig& q, int n_nodes);

/// Noise power of one column as a function of its diagonal feedback d:
///   zeta(d) = sigma2 / N * (gain + sum_i m_i |d_i|^2 - 2 Re sum_i conj(d_i) c_i).
struct QuadraticColumn {
    double gain = 0.0;
    Vector m;
    CVector c;
    double sigma2 = 0.0;

    double zeta(const CVector& d, int n_nodes) const;
};

/// How FIR coefficients are shared. The constrained optima are the pooled
/// ratio-of-sums of the same quadratic, not averages of the free solution.
enum class Projection { PerNodePerStep, PerStep, PerNode };

struct FeedbackPlan {
    Scenario scenario = Scenario::FirDet;
    int n_nodes = 0;
    Projection projection = Projection::PerNodePerStep;
    /// N x columns. Columns are FIR steps t-1 = 0..T-1, IIR branches in sorted
    /// order, or the single ATC column.
    CMatrix theta;
    std::vector<QuadraticColumn> model;
    /// Per column, sum_i |c_i|^2 / m_i (unscaled by sigma2/N).
    Vector reduction;
    /// zeta(0) - zeta(theta), summed over columns; >= 0.
    double predicted_reduction = 0.0;
    Vector zeta;
    Vector zeta_baseline;
    /// (node, column) pairs where m_i = 0 and no feedback is possible.
    std::vector<std::pair<int, int>> degenerate;

    int columns() const { return static_cast<int>(theta.cols()); }
    double total_zeta() const { return zeta.sum(); }
    double total_baseline() const { return zeta_baseline.sum(); }
    /// Real part; throws InvalidInput if any imaginary part exceeds tol.
    Matrix real_theta(double tol = 1e-12) const;
    /// Snaps imaginary parts below tol to zero.
    void realify(double tol = 1e-12);
};

/// Builds a plan from per-column quadratics: optimal d_i = c_i / m_i.
FeedbackPlan plan_from_model(Scenario scenario, int n_nodes, std::vector<QuadraticColumn> model,
                             Projection projection = Projection::PerNodePerStep);

/// Per-column zeta for an arbitrary theta on the plan's model.
Vector predict_noise_power(const FeedbackPlan& plan, const CMatrix& theta);

FeedbackPlan qef_fir_det(const Matrix& S, const FirSpec& f, const NoiseBudget& budget,
                         Projection projection = Projection::PerNodePerStep);
FeedbackPlan qef_fir_random(const ShiftModel& model, const FirSpec& f, const NoiseBudget& budget,
                            Projection projection = Projection::PerNodePerStep);
FeedbackPlan qef_iir_det(const Matrix& S, const IirSpec& f, const NoiseBudget& budget);
FeedbackPlan qef_iir_random(const ShiftModel& model, const IirSpec& f, const NoiseBudget& budget);
FeedbackPlan qef_iir_async(const Matrix& S, double p, const IirSpec& f, const NoiseBudget& budget);
/// Per-node scalars for block size M; m_i and c_i are block sums of the
/// diagonals of B^T W_xi B and B^T W_xi B A.
FeedbackPlan qef_atc(const Matrix& A_script, const Matrix& B_script, int M, double sigma2 = 1.0);

/// Quadratic columns without solving for theta (useful for oracles).
std::vector<QuadraticColumn> fir_model(const ShiftModel& model, const FirSpec& f, const NoiseBudget& budget);
std::vector<QuadraticColumn> iir_model(const ShiftModel& model, const IirSpec& f, const NoiseBudget& budget);
std::vector<QuadraticColumn> iir_async_model(const Matrix& S, double p, const IirSpec& f, const NoiseBudget& budget);
QuadraticColumn atc_model(const Matrix& A_script, const Matrix& B_script, int M, double sigma2 = 1.0);

} // namespace gqef

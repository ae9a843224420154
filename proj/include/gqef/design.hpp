#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/filters.hpp"
#include "gqef/graphs.hpp"

namespace gqef {

enum class RegularizerKind { FirDet, IirDet, FirRandom, IirRandom };
const char* to_string(RegularizerKind k);

struct RegularizerValue {
    double value = 0.0;
    Vector gradient; ///< w.r.t. phi (FIR) or |psi_k|^2 (IIR)
    RegularizerKind kind = RegularizerKind::FirDet;
};

/// Q with phi^T Q phi = sum_t tr(G_{t-1} S S^T); row/column 0 are zero.
Matrix reg_fir_det_matrix(const Matrix& S, int T);
RegularizerValue reg_fir_det(const Matrix& S, const Vector& phi);

/// sum_k tr(W0(psi_k)) via the eigendecomposition of S.
RegularizerValue reg_iir_det(const ShiftOperator& S, const std::vector<cplx>& psi);
/// Same quantity as 1^T (sum_k (I - |psi_k|^2 S^T (x) S^T)^{-1}) 1 with 1 = vec(I). N <= 80.
double reg_iir_det_kron(const Matrix& S, const std::vector<cplx>& psi);

/// sum_t V'_{t-1}, entries p^{|i-j|} rho^{i+j-2t} for i, j >= t.
Matrix reg_fir_random_matrix(double p, double rho, int T);
/// Evaluated on |phi|.
RegularizerValue reg_fir_random(double p, double rho, const Vector& phi);

/// sum_k |psi_k|^2 / (1 - |psi_k|^2 rho^2).
RegularizerValue reg_iir_random(const std::vector<cplx>& psi, double rho);

struct DesignTarget {
    Vector lambda;
    Vector h;
    double cutoff = 0.5;
    double delta = 0.03;

    /// Ideal low-pass h = 1 for lambda < cutoff on a uniform grid over [lo, hi].
    static DesignTarget lowpass(double cutoff, double delta, int points = 1000, double lo = 0.0, double hi = 1.0);
    int points() const { return static_cast<int>(lambda.size()); }
};

/// Rows [1, lambda, ..., lambda^T] with column t scaled by p^t.
Matrix vandermonde(const Vector& lambda, int T, double p = 1.0);
/// Mean squared error per grid point of sum_t p^t phi_t lambda^t against h.
double fir_design_error(const DesignTarget& target, const Vector& phi, double p = 1.0);
/// Mean squared modulus error per grid point of the complex branch sum.
double iir_design_error(const DesignTarget& target, const IirSpec& f);

struct FirDesignReport {
    FirSpec filter;
    double error = 0.0;
    double ls_error = 0.0;     ///< unregularized least-squares error
    double regularizer = 0.0;  ///< phi^T Q phi
    double multiplier = 0.0;   ///< nu in Q + nu/M V^T V
    bool constraint_active = false;
};

/// min phi^T Q phi s.t. fir_design_error <= delta, by bisection on the multiplier.
FirDesignReport design_fir(const Matrix& Q, const DesignTarget& target, int T, double p = 1.0);
FirDesignReport design_fir_det(const Matrix& S, const DesignTarget& target, int T);
FirDesignReport design_fir_random(double p, double rho, const DesignTarget& target, int T);
/// Solution for a fixed multiplier (exposed for oracles).
Vector fir_design_solve(const Matrix& Q, const DesignTarget& target, int T, double p, double nu);

struct IirDesignOptions {
    double gamma = 0.2;
    RegularizerKind regularizer = RegularizerKind::IirDet;
    double rho = 1.0;            ///< used by the random-graph regularizer
    double psi2_max = 0.95;
    double phi2_max = 2.0;
    int starts = 8;
    double jitter = 0.05;
    std::uint64_t seed = 1;
    int max_iters = 300;
    double grad_step = 1e-6;
    double tol = 1e-10;
};

struct IirDesignReport {
    IirSpec filter;
    double error = 0.0;
    double regularizer = 0.0;
    double objective = 0.0;
    std::vector<double> trace; ///< accepted objective values of the winning start
    int iterations = 0;
    int winning_start = 0;
    std::string warning;
};

/// Evaluates a regularizer for IIR design: IirDet uses sum_k tr(W0)/N so the
/// constant branch contributes 1; IirRandom uses reg_iir_random.
class IirRegularizer {
public:
    IirRegularizer(const ShiftOperator* S, RegularizerKind kind, double rho);
    double operator()(const IirSpec& f) const;

private:
    RegularizerKind kind_;
    double rho_;
    int n_ = 0;
    CVector lambda_;
    CMatrix weights_; ///< w_ij such that tr(W0) = sum_ij w_ij / (1 - |psi|^2 lambda_i lambda_j)
};

/// Projected quasi-Newton on design error + gamma R. Branches with psi = 0
/// keep psi pinned; real branches stay real; conjugate pairs stay paired.
IirDesignReport design_iir(const ShiftOperator* S, const DesignTarget& target, const IirSpec& init,
                           const IirDesignOptions& opt);

/// Named coefficient sets for K = 3 low-pass designs.
IirSpec iir_preset(const std::string& name);

} // namespace gqef

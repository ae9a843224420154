#pragma once

#include <optional>
#include <string>

#include "gqef/common.hpp"
#include "gqef/graphs.hpp"

namespace gqef {

/// Distribution of the per-step shift S_t: either a fixed matrix or an
/// i.i.d. Bernoulli(p) edge mask over an edge model. All moments are exact.
class ShiftModel {
public:
    static ShiftModel deterministic(const Matrix& S);
    static ShiftModel deterministic(const ShiftOperator& S);
    /// p in [0, 1]; p = 1 degenerates to the base operator.
    static ShiftModel edges(const ShiftOperator& S, double p);

    int size() const noexcept { return static_cast<int>(base_.rows()); }
    double p() const noexcept { return p_; }
    bool random() const noexcept { return edges_.has_value() && p_ < 1.0; }
    const Matrix& base() const noexcept { return base_; }
    /// Spectral norm of the base operator; bounds every realization.
    double rho() const noexcept { return rho_; }
    const std::optional<EdgeModel>& edge_model() const noexcept { return edges_; }

    /// E[S_t].
    const Matrix& mean() const noexcept { return mean_; }
    /// E[S_t^T M S_t] in O(N^3 + E).
    Matrix conjugate(const Matrix& M) const;
    /// E[S_t S_t^T].
    Matrix outer() const;
    /// E[S_t^T (x) S_t^T], N^2 x N^2. Refuses N > 80.
    Matrix kron() const;

private:
    Matrix base_;
    Matrix mean_;
    double p_ = 1.0;
    double rho_ = 0.0;
    std::optional<EdgeModel> edges_;
};

struct LyapunovResult {
    Matrix W;
    double residual = 0.0;
    int iterations = 0;
    std::string method;
};

/// W = A^T W A + I by squared Smith iteration. Throws DivergenceError when
/// rho(A) >= 1.
LyapunovResult solve_stein(const Matrix& A);
/// Same equation by a dense Kronecker solve; N <= 80.
LyapunovResult solve_stein_vec(const Matrix& A);

/// W0 = |psi|^2 S^T W0 S + I.
LyapunovResult solve_lyapunov_deterministic(const Matrix& S, cplx psi);
LyapunovResult solve_lyapunov_deterministic(const ShiftOperator& S, cplx psi);

/// E[Phi_{t:tau1-1}^T Phi_{t:tau2-1}] for i.i.d. shifts.
Matrix expected_cross_gram(const ShiftModel& model, int t, int tau1, int tau2);

/// E[G_{t-1}] = E[H^T H] with H = sum_{tau=t}^{T} phi_tau Phi_{t:tau-1},
/// assembled term by term from expected_cross_gram.
Matrix expected_fir_gram(const ShiftModel& model, const Vector& phi, int t);

/// All E[G_{t-1}], t = 1..T, by the backward recursion
/// E[G_{t-1}] = phi_t^2 I + phi_t (Hbar_t Sbar + (Hbar_t Sbar)^T) + E[S^T E[G_t] S].
std::vector<Matrix> expected_fir_grams(const ShiftModel& model, const Vector& phi);

/// W_Phi = |psi|^2 E[S^T W_Phi S] + I by fixed-point iteration.
LyapunovResult solve_w_phi(const ShiftModel& model, cplx psi, double tol = 1e-13, int max_iters = 10000);

/// Diagonal of E[P (x) P] for Bernoulli(p) node selection: p on i == j pairs, p^2 otherwise.
Matrix expected_kron_selection(int n, double p);
/// E[P W P] = p^2 W + (p - p^2) Diag(W).
CMatrix expected_selection_conjugate(const CMatrix& W, double p);

struct AsyncGramian {
    CMatrix W;    ///< W_P
    CMatrix EPWP; ///< E[P W_P P]
    double residual = 0.0;
    int iterations = 0;
    double contraction = 0.0; ///< 1 - p + p |psi|^2 ||S||_2^2
};

/// W_P = E[(I + B^H P) W_P (I + P B)] + I with B = psi S - I.
AsyncGramian solve_w_p(const Matrix& S, cplx psi, double p, double tol = 1e-13, int max_iters = 100000);

/// W_xi = (B A)^T W_xi (B A) + I.
LyapunovResult solve_w_xi(const Matrix& A_script, const Matrix& B_script);

/// Largest eigenvalue magnitude of a general square matrix.
double spectral_radius(const Matrix& A);

} // namespace gqef

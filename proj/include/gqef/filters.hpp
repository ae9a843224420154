#pragma once

#include <cstdint>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/graphs.hpp"

namespace gqef {

/// Polynomial graph filter y = sum_t phi_t S^t x.
struct FirSpec {
    Vector coeffs; // phi_0 .. phi_T

    int order() const { return static_cast<int>(coeffs.size()) - 1; }
    double response(double lambda) const;
};

struct IirBranch {
    cplx psi;
    cplx phi;
};

/// Parallel first-order branches y = sum_k phi_k (I - psi_k S)^{-1} x.
struct IirSpec {
    std::vector<IirBranch> branches;

    int size() const { return static_cast<int>(branches.size()); }
    cplx response(double lambda) const;
    /// Branches sorted by (Re psi, Im psi, Re phi, Im phi).
    IirSpec sorted() const;
    /// True when every complex branch has its conjugate partner.
    bool conjugate_closed(double tol = 1e-12) const;
};

/// Throws InvalidInput unless |psi_k| rho < 1 for all branches.
void check_stability(const IirSpec& f, double rho);

Vector fir_exact(const Matrix& S, const FirSpec& f, const Vector& x);
inline Vector fir_exact(const ShiftOperator& S, const FirSpec& f, const Vector& x) {
    return fir_exact(S.matrix(), f, x);
}

/// Per-branch steady states phi_k (I - psi_k S)^{-1} x in sorted branch order.
std::vector<CVector> iir_branch_states(const Matrix& S, const IirSpec& f, const Vector& x);
/// Complex sum of branch states.
CVector iir_exact_complex(const Matrix& S, const IirSpec& f, const Vector& x);
/// Real output; throws NumericalError if the imaginary residue exceeds 1e-9.
Vector iir_exact(const ShiftOperator& S, const IirSpec& f, const Vector& x);
Vector iir_exact(const Matrix& S, double rho, const IirSpec& f, const Vector& x);

Vector fir_recursion_step(const Matrix& S_t, const Vector& w);
CVector iir_recursion_step(const Matrix& S_t, cplx psi, cplx phi, const CVector& w, const Vector& x);
/// Only the selected coordinates take the synchronous update; the rest keep w.
CVector iir_async_step(const Matrix& S, cplx psi, cplx phi, const CVector& w, const Vector& x,
                       const std::vector<std::uint8_t>& selected);

struct RecursionRun {
    Vector y;
    int iterations = 0;
    bool converged = false;
};

/// Synchronous IIR recursion from w = 0 until max|y_t - y_{t-1}| < tol.
RecursionRun iir_iterate(const Matrix& S, const IirSpec& f, const Vector& x, double tol = 1e-10,
                         int max_iters = 2000);

} // namespace gqef

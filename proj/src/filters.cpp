#include "gqef/filters.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

namespace gqef {

double FirSpec::response(double lambda) const {
    double acc = 0.0;
    for (Eigen::Index t = coeffs.size() - 1; t >= 0; --t) acc = acc * lambda + coeffs[t];
    return acc;
}

cplx IirSpec::response(double lambda) const {
    cplx acc = 0.0;
    for (const auto& b : branches) acc += b.phi / (1.0 - b.psi * lambda);
    return acc;
}

IirSpec IirSpec::sorted() const {
    IirSpec out = *this;
    std::sort(out.branches.begin(), out.branches.end(), [](const IirBranch& a, const IirBranch& b) {
        return std::make_tuple(a.psi.real(), a.psi.imag(), a.phi.real(), a.phi.imag()) <
               std::make_tuple(b.psi.real(), b.psi.imag(), b.phi.real(), b.phi.imag());
    });
    return out;
}

bool IirSpec::conjugate_closed(double tol) const {
    std::vector<char> used(branches.size(), 0);
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& b = branches[k];
        if (std::abs(b.psi.imag()) <= tol && std::abs(b.phi.imag()) <= tol) continue;
        if (used[k]) continue;
        bool found = false;
        for (std::size_t m = 0; m < branches.size(); ++m) {
            if (m == k || used[m]) continue;
            if (std::abs(branches[m].psi - std::conj(b.psi)) <= tol &&
                std::abs(branches[m].phi - std::conj(b.phi)) <= tol) {
                used[m] = used[k] = 1;
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

void check_stability(const IirSpec& f, double rho) {
    for (const auto& b : f.branches) {
        if (!std::isfinite(b.psi.real()) || !std::isfinite(b.psi.imag()) || !std::isfinite(b.phi.real()) ||
            !std::isfinite(b.phi.imag()))
            throw InvalidInput("IIR branch has non-finite coefficients");
        if (!(std::abs(b.psi) * rho < 1.0))
            throw InvalidInput("unstable IIR branch: |psi| * rho = " + std::to_string(std::abs(b.psi) * rho));
    }
}

Vector fir_exact(const Matrix& S, const FirSpec& f, const Vector& x) {
    if (S.rows() != x.size() || S.cols() != x.size()) throw InvalidInput("fir_exact: dimension mismatch");
    if (f.coeffs.size() == 0) throw InvalidInput("fir_exact: empty coefficient vector");
    if (!f.coeffs.allFinite()) throw InvalidInput("fir_exact: non-finite coefficients");
    // Horner: y = phi_0 x + S (phi_1 x + S (...))
    Vector acc = f.coeffs[f.coeffs.size() - 1] * x;
    for (Eigen::Index t = f.coeffs.size() - 2; t >= 0; --t) acc = S * acc + f.coeffs[t] * x;
    return acc;
}

std::vector<CVector> iir_branch_states(const Matrix& S, const IirSpec& f, const Vector& x) {
    const auto n = S.rows();
    if (S.cols() != n || x.size() != n) throw InvalidInput("iir_exact: dimension mismatch");
    const IirSpec sorted = f.sorted();
    std::vector<CVector> out;
    out.reserve(sorted.branches.size());
    const CVector xc = x.cast<cplx>();
    const CMatrix Sc = S.cast<cplx>();
    for (const auto& b : sorted.branches) {
        CMatrix A = CMatrix::Identity(n, n) - b.psi * Sc;
        Eigen::PartialPivLU<CMatrix> lu(A);
        const double rc = lu.rcond();
        if (!(rc > 1e-12)) throw NumericalError("iir_exact: (I - psi S) is ill-conditioned");
        out.push_back(b.phi * lu.solve(xc));
    }
    return out;
}

CVector iir_exact_complex(const Matrix& S, const IirSpec& f, const Vector& x) {
    CVector y = CVector::Zero(x.size());
    for (const auto& w : iir_branch_states(S, f, x)) y += w;
    return y;
}

Vector iir_exact(const Matrix& S, double rho, const IirSpec& f, const Vector& x) {
    check_stability(f, rho);
    const CVector y = iir_exact_complex(S, f, x);
    const double im = y.size() ? y.imag().cwiseAbs().maxCoeff() : 0.0;
    if (im > 1e-9)
        throw NumericalError("iir_exact: imaginary residue " + std::to_string(im) +
                             " (branches not conjugate-closed?)");
    return y.real();
}

Vector iir_exact(const ShiftOperator& S, const IirSpec& f, const Vector& x) {
    return iir_exact(S.matrix(), S.spectral_radius(), f, x);
}

Vector fir_recursion_step(const Matrix& S_t, const Vector& w) {
    if (S_t.cols() != w.size()) throw InvalidInput("fir_recursion_step: dimension mismatch");
    return S_t * w;
}

CVector iir_recursion_step(const Matrix& S_t, cplx psi, cplx phi, const CVector& w, const Vector& x) {
    if (S_t.cols() != w.size() || x.size() != w.size())
        throw InvalidInput("iir_recursion_step: dimension mismatch");
    return psi * (S_t.cast<cplx>() * w) + phi * x.cast<cplx>();
}

CVector iir_async_step(const Matrix& S, cplx psi, cplx phi, const CVector& w, const Vector& x,
                       const std::vector<std::uint8_t>& selected) {
    if (S.cols() != w.size() || x.size() != w.size() || static_cast<Eigen::Index>(selected.size()) != w.size())
        throw InvalidInput("iir_async_step: dimension mismatch");
    CVector out = w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (!selected[i]) continue;
        cplx acc = 0.0;
        for (Eigen::Index j = 0; j < w.size(); ++j) acc += S(i, j) * w[j];
        out[i] = psi * acc + phi * x[i];
    }
    return out;
}

RecursionRun iir_iterate(const Matrix& S, const IirSpec& f, const Vector& x, double tol, int max_iters) {
    const IirSpec sorted = f.sorted();
    std::vector<CVector> w(sorted.branches.size(), CVector::Zero(x.size()));
    CVector y_prev = CVector::Zero(x.size());
    RecursionRun run;
    for (int t = 1; t <= max_iters; ++t) {
        CVector y = CVector::Zero(x.size());
        for (std::size_t k = 0; k < w.size(); ++k) {
            w[k] = iir_recursion_step(S, sorted.branches[k].psi, sorted.branches[k].phi, w[k], x);
            y += w[k];
        }
        const double change = (y - y_prev).cwiseAbs().maxCoeff();
        y_prev = y;
        run.iterations = t;
        if (change < tol) {
            run.converged = true;
            break;
        }
    }
    run.y = y_prev.real();
    return run;
}

} // namespace gqef

#include "gqef/gramians.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gqef {

namespace {

struct Entry {
    int r, c;
    double v;
};

// Nonzero entries of a single (symmetric) edge term.
std::vector<Entry> edge_entries(const EdgeModel& em, const Edge& e) {
    const double w = em.scale * e.weight;
    if (em.laplacian_form) return {{e.i, e.i, w}, {e.j, e.j, w}, {e.i, e.j, -w}, {e.j, e.i, -w}};
    return {{e.i, e.j, w}, {e.j, e.i, w}};
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

double stein_residual(const Matrix& A, const Matrix& W) {
    return (A.transpose() * W * A + Matrix::Identity(W.rows(), W.cols()) - W).norm();
}

} // namespace

ShiftModel ShiftModel::deterministic(const Matrix& S) {
    if (S.rows() != S.cols()) throw InvalidInput("shift model: operator must be square");
    ShiftModel m;
    m.base_ = S;
    m.mean_ = S;
    m.p_ = 1.0;
    m.rho_ = spectral_norm(S);
    return m;
}

ShiftModel ShiftModel::deterministic(const ShiftOperator& S) { return deterministic(S.matrix()); }

ShiftModel ShiftModel::edges(const ShiftOperator& S, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("edge probability must be in [0,1]");
    if (p == 1.0) return deterministic(S);
    if (!S.edge_model()) throw InvalidInput("random edge model needs an undirected graph-built operator");
    ShiftModel m;
    m.base_ = S.matrix();
    m.mean_ = expected_shift(S, p);
    m.p_ = p;
    m.rho_ = spectral_norm(S.matrix());
    m.edges_ = S.edge_model();
    return m;
}

Matrix ShiftModel::conjugate(const Matrix& M) const {
    if (M.rows() != base_.rows() || M.cols() != base_.cols())
        throw InvalidInput("expected_conjugation: shape mismatch");
    if (!random()) return base_.transpose() * M * base_;
    const double p2 = p_ * p_;
    Matrix out = p2 * (base_.transpose() * M * base_);
    const double c = p_ - p2;
    if (c == 0.0) return out;
    const auto& em = *edges_;
    for (const auto& e : em.edges) {
        const int u = e.i, v = e.j;
        const double w = em.scale * e.weight;
        const double w2 = c * w * w;
        if (em.laplacian_form) {
            const double q = w2 * (M(u, u) - M(u, v) - M(v, u) + M(v, v));
            out(u, u) += q;
            out(v, v) += q;
            out(u, v) -= q;
            out(v, u) -= q;
        } else {
            out(u, u) += w2 * M(v, v);
            out(v, v) += w2 * M(u, u);
            out(u, v) += w2 * M(v, u);
            out(v, u) += w2 * M(u, v);
        }
    }
    return out;
}

Matrix ShiftModel::outer() const {
    if (!random()) return base_ * base_.transpose();
    // Edge terms are symmetric, so E[S S^T] = E[S^T I S].
    return conjugate(Matrix::Identity(size(), size()));
}

Matrix ShiftModel::kron() const {
    const int n = size();
    if (n > 80) throw InvalidInput("expected Kronecker kernel is only materialized for N <= 80");
    const Matrix St = base_.transpose();
    if (!random()) return gqef::kron(St, St);
    const double p2 = p_ * p_;
    Matrix out = p2 * gqef::kron(St, St);
    const double c = p_ - p2;
    const auto& em = *edges_;
    for (const auto& e : em.edges) {
        const auto ent = edge_entries(em, e);
        for (const auto& a : ent)
            for (const auto& b : ent) out(a.r * n + b.r, a.c * n + b.c) += c * a.v * b.v;
    }
    return out;
}

double spectral_radius(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(A, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

LyapunovResult solve_stein(const Matrix& A) {
    if (A.rows() != A.cols()) throw InvalidInput("solve_stein: matrix must be square");
    const double rho = spectral_radius(A);
    if (!(rho < 1.0))
        throw DivergenceError("Stein equation has no PSD solution: spectral radius " + std::to_string(rho) + " >= 1");
    const auto n = A.rows();
    Matrix X = Matrix::Identity(n, n);
    Matrix Ak = A;
    LyapunovResult res;
    res.method = "doubling";
    for (int k = 0; k < 100; ++k) {
        const Matrix inc = Ak.transpose() * X * Ak;
        X += inc;
        X = 0.5 * (X + X.transpose()).eval();
        ++res.iterations;
        if (inc.norm() <= 1e-17 * X.norm()) break;
        Ak = (Ak * Ak).eval();
    }
    res.W = std::move(X);
    res.residual = stein_residual(A, res.W);
    if (!std::isfinite(res.residual)) throw NumericalError("solve_stein: non-finite solution");
    return res;
}

LyapunovResult solve_stein_vec(const Matrix& A) {
    const auto n = A.rows();
    if (n > 80) throw InvalidInput("solve_stein_vec: N must be <= 80");
    const Matrix K = Matrix::Identity(n * n, n * n) - kron(A.transpose(), A.transpose());
    const Matrix I = Matrix::Identity(n, n);
    Vector rhs = Eigen::Map<const Vector>(I.data(), n * n);
    Eigen::PartialPivLU<Matrix> lu(K);
    Vector w = lu.solve(rhs);
    LyapunovResult res;
    res.method = "kronecker";
    res.W = Eigen::Map<Matrix>(w.data(), n, n);
    res.residual = stein_residual(A, res.W);
    return res;
}

LyapunovResult solve_lyapunov_deterministic(const Matrix& S, cplx psi) {
    if (S.rows() != S.cols()) throw InvalidInput("solve_lyapunov_deterministic: S must be square");
    const double rho = spectral_radius(S);
    if (!(std::abs(psi) * rho < 1.0))
        throw DivergenceError("|psi| rho = " + std::to_string(std::abs(psi) * rho) + " >= 1");
    return solve_stein(std::abs(psi) * S);
}

LyapunovResult solve_lyapunov_deterministic(const ShiftOperator& S, cplx psi) {
    return solve_lyapunov_deterministic(S.matrix(), psi);
}

Matrix expected_cross_gram(const ShiftModel& model, int t, int tau1, int tau2) {
    if (t < 0 || tau1 < t || tau2 < t) throw InvalidInput("expected_cross_gram: need tau1, tau2 >= t >= 0");
    const int n = model.size();
    const int d = std::abs(tau2 - tau1);
    Matrix M = Matrix::Identity(n, n);
    for (int k = 0; k < d; ++k) M = (M * model.mean()).eval();
    if (tau1 > tau2) M.transposeInPlace();
    const int l = std::min(tau1, tau2) - t;
    for (int k = 0; k < l; ++k) M = model.conjugate(M);
    return M;
}

Matrix expected_fir_gram(const ShiftModel& model, const Vector& phi, int t) {
    const int T = static_cast<int>(phi.size()) - 1;
    if (t < 1 || t > T) throw InvalidInput("expected_fir_gram: t must be in [1, T]");
    Matrix G = Matrix::Zero(model.size(), model.size());
    for (int a = t; a <= T; ++a)
        for (int b = t; b <= T; ++b) {
            if (phi[a] == 0.0 || phi[b] == 0.0) continue;
            G += phi[a] * phi[b] * expected_cross_gram(model, t, a, b);
        }
    return G;
}

std::vector<Matrix> expected_fir_grams(const ShiftModel& model, const Vector& phi) {
    const int T = static_cast<int>(phi.size()) - 1;
    if (T < 1) throw InvalidInput("FIR order must be >= 1");
    const int n = model.size();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix& Sbar = model.mean();
    std::vector<Matrix> G(T);
    Matrix Hbar = Matrix::Zero(n, n); // sum_{tau > t} phi_tau Sbar^{tau - t - 1}
    Matrix next = Matrix::Zero(n, n); // E[G_t]
    for (int t = T; t >= 1; --t) {
        const Matrix HS = Hbar * Sbar;
        Matrix g = phi[t] * phi[t] * I + phi[t] * (HS + HS.transpose());
        if (t < T) g += model.conjugate(next);
        G[t - 1] = g;
        next = g;
        Hbar = phi[t] * I + Hbar * Sbar;
    }
    return G;
}

LyapunovResult solve_w_phi(const ShiftModel& model, cplx psi, double tol, int max_iters) {
    const double a2 = std::norm(psi);
    if (!(std::sqrt(a2) * model.rho() < 1.0))
        throw DivergenceError("W_Phi: |psi| ||S||_2 = " + std::to_string(std::sqrt(a2) * model.rho()) + " >= 1");
    if (!model.random()) {
        auto r = solve_stein(std::sqrt(a2) * model.base());
        return r;
    }
    const int n = model.size();
    const Matrix I = Matrix::Identity(n, n);
    Matrix W = I;
    LyapunovResult res;
    res.method = "fixed-point";
    for (int k = 1; k <= max_iters; ++k) {
        Matrix next = a2 * model.conjugate(W) + I;
        next = 0.5 * (next + next.transpose()).eval();
        const double change = (next - W).norm();
        W = std::move(next);
        res.iterations = k;
        if (!std::isfinite(change)) throw DivergenceError("W_Phi iteration diverged");
        if (change <= tol * std::max(1.0, W.norm())) break;
    }
    res.residual = (a2 * model.conjugate(W) + I - W).norm();
    res.W = std::move(W);
    return res;
}

Matrix expected_kron_selection(int n, double p) {
    if (n <= 0) throw InvalidInput("expected_kron_selection: n must be positive");
    if (!(p > 0.0 && p <= 1.0)) throw InvalidInput("selection probability must be in (0,1]");
    Matrix K = Matrix::Zero(n * n, n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) K(j * n + i, j * n + i) = (i == j) ? p : p * p;
    return K;
}

CMatrix expected_selection_conjugate(const CMatrix& W, double p) {
    CMatrix out = (p * p) * W;
    out.diagonal() += (p - p * p) * W.diagonal();
    return out;
}

AsyncGramian solve_w_p(const Matrix& S, cplx psi, double p, double tol, int max_iters) {
    if (S.rows() != S.cols()) throw InvalidInput("solve_w_p: S must be square");
    if (!(p > 0.0 && p <= 1.0)) throw InvalidInput("selection probability must be in (0,1]");
    const auto n = S.rows();
    const double norm = std::abs(psi) * spectral_norm(S);
    AsyncGramian out;
    out.contraction = 1.0 - p + p * norm * norm;
    if (!(norm < 1.0))
        throw DivergenceError("W_P: ||psi S||_2 = " + std::to_string(norm) + " >= 1");
    const CMatrix I = CMatrix::Identity(n, n);
    const CMatrix B = psi * S.cast<cplx>() - I;
    const CMatrix Bh = B.adjoint();
    auto step = [&](const CMatrix& W) {
        CMatrix next = W + p * (Bh * W + W * B) + Bh * expected_selection_conjugate(W, p) * B + I;
        return CMatrix(0.5 * (next + next.adjoint()));
    };
    CMatrix W = I;
    for (int k = 1; k <= max_iters; ++k) {
        CMatrix next = step(W);
        const double change = (next - W).norm();
        W = std::move(next);
        out.iterations = k;
        if (!std::isfinite(change)) throw DivergenceError("W_P iteration diverged");
        if (change <= tol * std::max(1.0, W.norm())) break;
    }
    out.residual = (step(W) - W).norm();
    out.EPWP = expected_selection_conjugate(W, p);
    out.W = std::move(W);
    return out;
}

LyapunovResult solve_w_xi(const Matrix& A_script, const Matrix& B_script) {
    if (A_script.rows() != B_script.rows() || A_script.cols() != B_script.cols() ||
        A_script.rows() != A_script.cols())
        throw InvalidInput("solve_w_xi: shape mismatch");
    return solve_stein(B_script * A_script);
}

} // namespace gqef

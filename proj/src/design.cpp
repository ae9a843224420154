#include "gqef/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "gqef/rng.hpp"

namespace gqef {

const char* to_string(RegularizerKind k) {
    switch (k) {
    case RegularizerKind::FirDet: return "fir_det";
    case RegularizerKind::IirDet: return "iir_det";
    case RegularizerKind::FirRandom: return "fir_random";
    case RegularizerKind::IirRandom: return "iir_random";
    }
    return "?";
}

Matrix reg_fir_det_matrix(const Matrix& S, int T) {
    if (T < 1) throw InvalidInput("regularizer needs T >= 1");
    const auto n = S.rows();
    // P[a] = S^a for a = 0..T; gram(a, b) = tr((S^a)^T S^b).
    std::vector<Matrix> P(T + 1);
    P[0] = Matrix::Identity(n, n);
    for (int a = 1; a <= T; ++a) P[a] = S * P[a - 1];
    Matrix gram(T + 1, T + 1);
    for (int a = 0; a <= T; ++a)
        for (int b = a; b <= T; ++b) gram(a, b) = gram(b, a) = (P[a].array() * P[b].array()).sum();
    Matrix Q = Matrix::Zero(T + 1, T + 1);
    for (int t = 1; t <= T; ++t)
        for (int i = t; i <= T; ++i)
            for (int j = t; j <= T; ++j) Q(i, j) += gram(i - t + 1, j - t + 1);
    return Q;
}

RegularizerValue reg_fir_det(const Matrix& S, const Vector& phi) {
    const Matrix Q = reg_fir_det_matrix(S, static_cast<int>(phi.size()) - 1);
    return {phi.dot(Q * phi), 2.0 * Q * phi, RegularizerKind::FirDet};
}

namespace {

void spectral_weights(const ShiftOperator& S, CVector& lambda, CMatrix& w) {
    const Spectrum& sp = S.spectrum();
    lambda = sp.lambda;
    const CMatrix UtU = sp.U.transpose() * sp.U;
    const CMatrix Vi = sp.U_inv * sp.U_inv.transpose();
    w = UtU.cwiseProduct(Vi.transpose());
}

double trace_w0(const CVector& lambda, const CMatrix& w, double a2) {
    cplx acc = 0.0;
    const auto n = lambda.size();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) acc += w(i, j) / (1.0 - a2 * lambda[i] * lambda[j]);
    return acc.real();
}

} // namespace

RegularizerValue reg_iir_det(const ShiftOperator& S, const std::vector<cplx>& psi) {
    CVector lambda;
    CMatrix w;
    spectral_weights(S, lambda, w);
    RegularizerValue r;
    r.kind = RegularizerKind::IirDet;
    r.gradient.resize(static_cast<Eigen::Index>(psi.size()));
    const double rho = S.spectral_radius();
    for (std::size_t k = 0; k < psi.size(); ++k) {
        const double a2 = std::norm(psi[k]);
        if (!(std::sqrt(a2) * rho < 1.0)) throw InvalidInput("reg_iir_det: unstable branch");
        r.value += trace_w0(lambda, w, a2);
        cplx g = 0.0;
        for (Eigen::Index i = 0; i < lambda.size(); ++i)
            for (Eigen::Index j = 0; j < lambda.size(); ++j) {
                const cplx ll = lambda[i] * lambda[j];
                const cplx den = 1.0 - a2 * ll;
                g += w(i, j) * ll / (den * den);
            }
        r.gradient[static_cast<Eigen::Index>(k)] = g.real();
    }
    return r;
}

double reg_iir_det_kron(const Matrix& S, const std::vector<cplx>& psi) {
    const auto n = S.rows();
    if (n > 80) throw InvalidInput("reg_iir_det_kron: N must be <= 80");
    const Matrix St = S.transpose();
    Matrix K(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) = St(i, j) * St;
    const Matrix I = Matrix::Identity(n, n);
    const Vector one = Eigen::Map<const Vector>(I.data(), n * n);
    double acc = 0.0;
    for (const auto& p : psi) {
        const Matrix A = Matrix::Identity(n * n, n * n) - std::norm(p) * K;
        acc += one.dot(A.partialPivLu().solve(one));
    }
    return acc;
}

Matrix reg_fir_random_matrix(double p, double rho, int T) {
    if (T < 1) throw InvalidInput("regularizer needs T >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("p must be in [0,1]");
    if (!(rho > 0.0)) throw InvalidInput("rho must be positive");
    Matrix Q = Matrix::Zero(T + 1, T + 1);
    for (int t = 1; t <= T; ++t)
        for (int i = t; i <= T; ++i)
            for (int j = t; j <= T; ++j) Q(i, j) += std::pow(p, std::abs(i - j)) * std::pow(rho, i + j - 2 * t);
    return Q;
}

RegularizerValue reg_fir_random(double p, double rho, const Vector& phi) {
    const Matrix Q = reg_fir_random_matrix(p, rho, static_cast<int>(phi.size()) - 1);
    const Vector a = phi.cwiseAbs();
    Vector g = 2.0 * Q * a;
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] *= phi[i] < 0 ? -1.0 : 1.0;
    return {a.dot(Q * a), g, RegularizerKind::FirRandom};
}

RegularizerValue reg_iir_random(const std::vector<cplx>& psi, double rho) {
    RegularizerValue r;
    r.kind = RegularizerKind::IirRandom;
    r.gradient.resize(static_cast<Eigen::Index>(psi.size()));
    for (std::size_t k = 0; k < psi.size(); ++k) {
        const double a2 = std::norm(psi[k]);
        const double den = 1.0 - a2 * rho * rho;
        if (!(den > 0.0)) throw InvalidInput("reg_iir_random: unstable branch");
        r.value += a2 / den;
        r.gradient[static_cast<Eigen::Index>(k)] = 1.0 / (den * den);
    }
    return r;
}

DesignTarget DesignTarget::lowpass(double cutoff, double delta, int points, double lo, double hi) {
    if (points < 2) throw InvalidInput("design grid needs at least 2 points");
    if (!(hi > lo)) throw InvalidInput("design grid bounds must be increasing");
    if (!(delta > 0.0)) throw InvalidInput("design tolerance must be positive");
    DesignTarget t;
    t.cutoff = cutoff;
    t.delta = delta;
    t.lambda = Vector::LinSpaced(points, lo, hi);
    t.h.resize(points);
    for (int m = 0; m < points; ++m) t.h[m] = t.lambda[m] < cutoff ? 1.0 : 0.0;
    return t;
}

Matrix vandermonde(const Vector& lambda, int T, double p) {
    Matrix V(lambda.size(), T + 1);
    for (Eigen::Index m = 0; m < lambda.size(); ++m) {
        double v = 1.0;
        for (int t = 0; t <= T; ++t) {
            V(m, t) = v;
            v *= p * lambda[m];
        }
    }
    return V;
}

double fir_design_error(const DesignTarget& target, const Vector& phi, double p) {
    const Matrix V = vandermonde(target.lambda, static_cast<int>(phi.size()) - 1, p);
    return (V * phi - target.h).squaredNorm() / target.points();
}

double iir_design_error(const DesignTarget& target, const IirSpec& f) {
    double acc = 0.0;
    for (int m = 0; m < target.points(); ++m) acc += std::norm(f.response(target.lambda[m]) - target.h[m]);
    return acc / target.points();
}

Vector fir_design_solve(const Matrix& Q, const DesignTarget& target, int T, double p, double nu) {
    const Matrix V = vandermonde(target.lambda, T, p);
    const double M = target.points();
    const Matrix A = Q + (nu / M) * (V.transpose() * V);
    const Vector b = (nu / M) * (V.transpose() * target.h);
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericalError("design_fir: singular system");
    Vector phi = ldlt.solve(b);
    if (!phi.allFinite()) throw NumericalError("design_fir: non-finite solution");
    return phi;
}

FirDesignReport design_fir(const Matrix& Q, const DesignTarget& target, int T, double p) {
    if (T < 0) throw InvalidInput("design_fir: order must be >= 0");
    if (Q.rows() != T + 1 || Q.cols() != T + 1) throw InvalidInput("design_fir: regularizer size mismatch");
    const Matrix V = vandermonde(target.lambda, T, p);
    FirDesignReport rep;
    const Vector ls = V.colPivHouseholderQr().solve(target.h);
    rep.ls_error = (V * ls - target.h).squaredNorm() / target.points();
    if (rep.ls_error > target.delta)
        throw InvalidInput("design_fir: infeasible tolerance (least-squares error " + std::to_string(rep.ls_error) +
                           " > delta)");
    auto err = [&](double nu) { return fir_design_error(target, fir_design_solve(Q, target, T, p, nu), p); };
    double lo = 1e-10, hi = 1e12;
    double nu;
    if (err(lo) <= target.delta) {
        nu = lo;
    } else if (err(hi) > target.delta) {
        // tolerance only reachable at the least-squares solution itself
        nu = hi;
    } else {
        // error(nu) is nonincreasing; bisect in log space
        for (int it = 0; it < 200; ++it) {
            const double mid = std::sqrt(lo * hi);
            if (err(mid) > target.delta)
                lo = mid;
            else
                hi = mid;
            if (hi / lo < 1.0 + 1e-13) break;
        }
        nu = hi;
        rep.constraint_active = true;
    }
    rep.multiplier = nu;
    rep.filter.coeffs = fir_design_solve(Q, target, T, p, nu);
    rep.error = fir_design_error(target, rep.filter.coeffs, p);
    rep.regularizer = rep.filter.coeffs.dot(Q * rep.filter.coeffs);
    return rep;
}

FirDesignReport design_fir_det(const Matrix& S, const DesignTarget& target, int T) {
    return design_fir(reg_fir_det_matrix(S, T), target, T, 1.0);
}

FirDesignReport design_fir_random(double p, double rho, const DesignTarget& target, int T) {
    return design_fir(reg_fir_random_matrix(p, rho, T), target, T, p);
}

IirRegularizer::IirRegularizer(const ShiftOperator* S, RegularizerKind kind, double rho) : kind_(kind), rho_(rho) {
    if (kind == RegularizerKind::IirDet) {
        if (!S) throw InvalidInput("IIR det regularizer needs a shift operator");
        n_ = S->size();
        spectral_weights(*S, lambda_, weights_);
        rho_ = S->spectral_radius();
    } else if (kind != RegularizerKind::IirRandom) {
        throw InvalidInput("IIR design needs an IIR regularizer");
    }
}

double IirRegularizer::operator()(const IirSpec& f) const {
    double acc = 0.0;
    for (const auto& b : f.branches) {
        const double a2 = std::norm(b.psi);
        if (!(std::sqrt(a2) * rho_ < 1.0)) return std::numeric_limits<double>::infinity();
        if (kind_ == RegularizerKind::IirDet)
            acc += trace_w0(lambda_, weights_, a2) / n_;
        else
            acc += a2 / (1.0 - a2 * rho_ * rho_);
    }
    return acc;
}

namespace {

enum class Slot { Pinned, Real, Pair };

struct Layout {
    std::vector<Slot> slots;
    std::vector<int> dims;
    int size = 0;
};

Layout layout_of(const IirSpec& init, std::vector<IirBranch>& reps) {
    Layout L;
    std::vector<char> used(init.branches.size(), 0);
    for (std::size_t k = 0; k < init.branches.size(); ++k) {
        if (used[k]) continue;
        const auto& b = init.branches[k];
        used[k] = 1;
        if (b.psi == cplx(0.0) && b.phi.imag() == 0.0) {
            L.slots.push_back(Slot::Pinned);
            L.dims.push_back(1);
        } else if (b.psi.imag() == 0.0 && b.phi.imag() == 0.0) {
            L.slots.push_back(Slot::Real);
            L.dims.push_back(2);
        } else {
            bool found = false;
            for (std::size_t m = k + 1; m < init.branches.size(); ++m) {
                if (used[m]) continue;
                if (std::abs(init.branches[m].psi - std::conj(b.psi)) < 1e-12 &&
                    std::abs(init.branches[m].phi - std::conj(b.phi)) < 1e-12) {
                    used[m] = 1;
                    found = true;
                    break;
                }
            }
            if (!found) throw InvalidInput("design_iir: complex branches must come in conjugate pairs");
            L.slots.push_back(Slot::Pair);
            L.dims.push_back(4);
        }
        reps.push_back(b);
        L.size += L.dims.back();
    }
    return L;
}

Vector pack(const Layout& L, const std::vector<IirBranch>& reps) {
    Vector x(L.size);
    int o = 0;
    for (std::size_t s = 0; s < L.slots.size(); ++s) {
        const auto& b = reps[s];
        switch (L.slots[s]) {
        case Slot::Pinned: x[o++] = b.phi.real(); break;
        case Slot::Real:
            x[o++] = b.psi.real();
            x[o++] = b.phi.real();
            break;
        case Slot::Pair:
            x[o++] = b.psi.real();
            x[o++] = b.psi.imag();
            x[o++] = b.phi.real();
            x[o++] = b.phi.imag();
            break;
        }
    }
    return x;
}

IirSpec unpack(const Layout& L, const Vector& x) {
    IirSpec f;
    int o = 0;
    for (auto s : L.slots) {
        switch (s) {
        case Slot::Pinned: f.branches.push_back({0.0, x[o++]}); break;
        case Slot::Real:
            f.branches.push_back({x[o], x[o + 1]});
            o += 2;
            break;
        case Slot::Pair: {
            const cplx psi(x[o], x[o + 1]);
            const cplx phi(x[o + 2], x[o + 3]);
            f.branches.push_back({psi, phi});
            f.branches.push_back({std::conj(psi), std::conj(phi)});
            o += 4;
            break;
        }
        }
    }
    return f;
}

void project(const Layout& L, Vector& x, double psi2_max, double phi2_max) {
    int o = 0;
    auto clamp_radial = [](double* v, int len, double r2) {
        double s = 0.0;
        for (int i = 0; i < len; ++i) s += v[i] * v[i];
        if (s > r2) {
            const double f = std::sqrt(r2 / s);
            for (int i = 0; i < len; ++i) v[i] *= f;
        }
    };
    for (auto s : L.slots) {
        switch (s) {
        case Slot::Pinned: clamp_radial(&x[o], 1, phi2_max); o += 1; break;
        case Slot::Real:
            clamp_radial(&x[o], 1, psi2_max);
            clamp_radial(&x[o + 1], 1, phi2_max);
            o += 2;
            break;
        case Slot::Pair:
            clamp_radial(&x[o], 2, psi2_max);
            clamp_radial(&x[o + 2], 2, phi2_max);
            o += 4;
            break;
        }
    }
}

struct StartResult {
    Vector x;
    double f = 0.0;
    std::vector<double> trace;
    int iterations = 0;
};

template <class F>
Vector numeric_gradient(const F& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
        if (!std::isfinite(g[i])) g[i] = 0.0;
    }
    return g;
}

template <class F>
StartResult minimize(const F& f, const Layout& L, Vector x, const IirDesignOptions& opt) {
    project(L, x, opt.psi2_max, opt.phi2_max);
    StartResult r;
    double fx = f(x);
    r.trace.push_back(fx);
    const auto n = x.size();
    Matrix H = Matrix::Identity(n, n);
    Vector g = numeric_gradient(f, x, opt.grad_step);
    for (int it = 0; it < opt.max_iters && std::isfinite(fx); ++it) {
        bool accepted = false;
        Vector x_new, g_new;
        double f_new = fx;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            const Vector dir = attempt == 0 ? Vector(-(H * g)) : Vector(-g);
            if (dir.dot(g) >= 0.0) continue;
            double step = 1.0;
            for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
                Vector cand = x + step * dir;
                project(L, cand, opt.psi2_max, opt.phi2_max);
                const double fc = f(cand);
                if (fc <= fx + 1e-4 * g.dot(cand - x) && fc < fx) {
                    x_new = cand;
                    f_new = fc;
                    accepted = true;
                    break;
                }
            }
            if (!accepted && attempt == 0) H.setIdentity();
        }
        if (!accepted) break;
        g_new = numeric_gradient(f, x_new, opt.grad_step);
        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-14) {
            const Matrix I = Matrix::Identity(n, n);
            const double rho = 1.0 / sy;
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        const double drop = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        r.trace.push_back(fx);
        r.iterations = it + 1;
        if (drop < opt.tol * std::max(1.0, std::abs(fx))) {
            // small drops alone are not convergence; also require a vanishing projected gradient
            Vector probe = x - g;
            project(L, probe, opt.psi2_max, opt.phi2_max);
            if ((probe - x).norm() < 1e-6) break;
        }
    }
    r.x = x;
    r.f = fx;
    return r;
}

} // namespace

IirDesignReport design_iir(const ShiftOperator* S, const DesignTarget& target, const IirSpec& init,
                           const IirDesignOptions& opt) {
    if (init.branches.empty()) throw InvalidInput("design_iir: empty initializer");
    if (opt.starts < 1) throw InvalidInput("design_iir: starts must be >= 1");
    if (!(opt.gamma >= 0.0)) throw InvalidInput("design_iir: gamma must be nonnegative");
    const IirRegularizer reg(S, opt.regularizer, opt.rho);
    std::vector<IirBranch> reps;
    const Layout L = layout_of(init, reps);
    const double rho = opt.regularizer == RegularizerKind::IirDet ? S->spectral_radius() : opt.rho;
    auto objective = [&](const Vector& x) {
        const IirSpec f = unpack(L, x);
        for (const auto& b : f.branches)
            if (!(std::abs(b.psi) * rho < 1.0)) return std::numeric_limits<double>::infinity();
        const double r = opt.gamma > 0.0 ? reg(f) : 0.0;
        return iir_design_error(target, f) + opt.gamma * r;
    };
    const Vector x0 = pack(L, reps);
    Rng rng(opt.seed);
    StartResult best;
    int best_start = -1;
    for (int s = 0; s < opt.starts; ++s) {
        Vector x = x0;
        if (s > 0)
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += opt.jitter * rng.normal();
        StartResult r = minimize(objective, L, x, opt);
        const bool better = best_start < 0 || r.f < best.f ||
                            (r.f == best.f && std::lexicographical_compare(r.x.data(), r.x.data() + r.x.size(),
                                                                           best.x.data(), best.x.data() + best.x.size()));
        if (better && std::isfinite(r.f)) {
            best = std::move(r);
            best_start = s;
        }
    }
    IirDesignReport rep;
    if (best_start < 0) {
        rep.filter = init;
        rep.warning = "no feasible descent; returning initializer";
        rep.error = iir_design_error(target, init);
        rep.objective = std::numeric_limits<double>::infinity();
        return rep;
    }
    rep.filter = unpack(L, best.x);
    rep.error = iir_design_error(target, rep.filter);
    rep.regularizer = reg(rep.filter);
    rep.objective = best.f;
    rep.trace = std::move(best.trace);
    rep.iterations = best.iterations;
    rep.winning_start = best_start;
    if (rep.error > target.delta) rep.warning = "design error exceeds tolerance";
    return rep;
}

IirSpec iir_preset(const std::string& name) {
    auto pair = [](double pr, double pi, double fr, double fi) {
        return std::vector<IirBranch>{{cplx(pr, -pi), cplx(fr, -fi)}, {cplx(pr, pi), cplx(fr, fi)}};
    };
    IirSpec f;
    f.branches.push_back({0.0, 1.0});
    std::vector<IirBranch> tail;
    if (name == "nonreg") {
        f.branches.push_back({-0.974, -1.414});
        tail = pair(0.342, 0.913, 0.748, 0.893);
    } else if (name == "reg") {
        f.branches.push_back({-0.427, -1.414});
        tail = pair(0.248, 0.795, 0.782, 0.923);
    } else if (name == "random_reg") {
        f.branches.push_back({-0.520, -1.414});
        tail = pair(0.221, 0.761, 0.784, 1.044);
    } else {
        throw InvalidInput("unknown IIR preset: " + name);
    }
    f.branches.insert(f.branches.end(), tail.begin(), tail.end());
    return f;
}

} // namespace gqef

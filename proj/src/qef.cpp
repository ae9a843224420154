#include "gqef/qef.hpp"

#include <cmath>

namespace gqef {

const char* to_string(Scenario s) {
    switch (s) {
    case Scenario::FirDet: return "fir_det";
    case Scenario::IirDet: return "iir_det";
    case Scenario::FirRandom: return "fir_random";
    case Scenario::IirRandom: return "iir_random";
    case Scenario::IirAsync: return "iir_async";
    case Scenario::AtcRegression: return "atc";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& s) {
    for (auto sc : {Scenario::FirDet, Scenario::IirDet, Scenario::FirRandom, Scenario::IirRandom, Scenario::IirAsync,
                    Scenario::AtcRegression})
        if (s == to_string(sc)) return sc;
    throw InvalidInput("unknown scenario: " + s);
}

bool is_fir(Scenario s) { return s == Scenario::FirDet || s == Scenario::FirRandom; }

NoiseBudget NoiseBudget::uniform(int n_nodes, int columns, double sigma2) {
    return {Vector::Constant(columns, sigma2), n_nodes};
}

void NoiseBudget::validate(int columns) const {
    if (sigma2.size() != columns) throw InvalidInput("noise budget needs one variance per step/branch");
    if (n_nodes <= 0) throw InvalidInput("noise budget: n_nodes must be positive");
    for (Eigen::Index k = 0; k < sigma2.size(); ++k)
        if (!(sigma2[k] > 0.0) || !std::isfinite(sigma2[k])) throw InvalidInput("noise variances must be positive");
}

NoiseBudget iir_noise_budget(const IirSpec& f, const QuantizerConfig& q, int n_nodes) {
    const IirSpec s = f.sorted();
    NoiseBudget b;
    b.n_nodes = n_nodes;
    b.sigma2.resize(s.size());
    const double d = q.step();
    for (int k = 0; k < s.size(); ++k) {
        const bool cx = s.branches[k].psi.imag() != 0.0 || s.branches[k].phi.imag() != 0.0;
        b.sigma2[k] = d * d / 12.0 * (cx ? 2.0 : 1.0);
    }
    return b;
}

double QuadraticColumn::zeta(const CVector& d, int n_nodes) const {
    double acc = gain;
    for (Eigen::Index i = 0; i < m.size(); ++i) acc += m[i] * std::norm(d[i]) - 2.0 * std::real(std::conj(d[i]) * c[i]);
    return sigma2 / n_nodes * acc;
}

Matrix FeedbackPlan::real_theta(double tol) const {
    if (theta.size() && theta.imag().cwiseAbs().maxCoeff() > tol)
        throw InvalidInput("feedback plan has complex coefficients");
    return theta.real();
}

void FeedbackPlan::realify(double tol) {
    for (Eigen::Index j = 0; j < theta.cols(); ++j)
        for (Eigen::Index i = 0; i < theta.rows(); ++i)
            if (std::abs(theta(i, j).imag()) <= tol) theta(i, j) = theta(i, j).real();
}

Vector predict_noise_power(const FeedbackPlan& plan, const CMatrix& theta) {
    if (theta.cols() != plan.columns() || theta.rows() != plan.theta.rows())
        throw InvalidInput("predict_noise_power: theta shape mismatch");
    Vector z(plan.columns());
    for (int k = 0; k < plan.columns(); ++k) z[k] = plan.model[k].zeta(theta.col(k), plan.n_nodes);
    return z;
}

FeedbackPlan plan_from_model(Scenario scenario, int n_nodes, std::vector<QuadraticColumn> model,
                             Projection projection) {
    FeedbackPlan plan;
    plan.scenario = scenario;
    plan.n_nodes = n_nodes;
    plan.projection = projection;
    const int cols = static_cast<int>(model.size());
    const int rows = cols ? static_cast<int>(model[0].m.size()) : 0;
    plan.theta = CMatrix::Zero(rows, cols);
    plan.reduction = Vector::Zero(cols);
    for (int k = 0; k < cols; ++k) {
        const auto& q = model[k];
        for (int i = 0; i < rows; ++i) {
            if (q.m[i] > 0.0) {
                plan.theta(i, k) = q.c[i] / q.m[i];
            } else {
                plan.degenerate.emplace_back(i, k);
            }
        }
    }
    if (projection == Projection::PerStep) {
        for (int k = 0; k < cols; ++k) {
            const double msum = model[k].m.sum();
            const cplx v = msum > 0.0 ? model[k].c.sum() / msum : cplx(0.0);
            plan.theta.col(k).setConstant(v);
        }
    } else if (projection == Projection::PerNode) {
        for (int i = 0; i < rows; ++i) {
            double msum = 0.0;
            cplx csum = 0.0;
            for (int k = 0; k < cols; ++k) {
                msum += model[k].sigma2 * model[k].m[i];
                csum += model[k].sigma2 * model[k].c[i];
            }
            plan.theta.row(i).setConstant(msum > 0.0 ? csum / msum : cplx(0.0));
        }
    }
    plan.model = std::move(model);
    plan.zeta = predict_noise_power(plan, plan.theta);
    plan.zeta_baseline = predict_noise_power(plan, CMatrix::Zero(rows, cols));
    for (int k = 0; k < cols; ++k) {
        const auto& q = plan.model[k];
        double r = 0.0;
        for (int i = 0; i < rows; ++i)
            if (q.m[i] > 0.0) r += std::norm(q.c[i]) / q.m[i];
        plan.reduction[k] = r;
    }
    plan.predicted_reduction = std::max(0.0, plan.total_baseline() - plan.total_zeta());
    return plan;
}

std::vector<QuadraticColumn> fir_model(const ShiftModel& model, const FirSpec& f, const NoiseBudget& budget) {
    const int T = f.order();
    if (T < 1) throw InvalidInput("FIR feedback needs order T >= 1");
    if (!f.coeffs.allFinite()) throw InvalidInput("FIR coefficients must be finite");
    budget.validate(T);
    const auto G = expected_fir_grams(model, f.coeffs);
    const Matrix outer = model.outer();
    std::vector<QuadraticColumn> cols(T);
    for (int k = 0; k < T; ++k) {
        auto& q = cols[k];
        q.gain = (G[k] * outer).trace();
        q.m = G[k].diagonal();
        q.c = (G[k] * model.mean()).diagonal().cast<cplx>();
        q.sigma2 = budget.sigma2[k];
    }
    return cols;
}

FeedbackPlan qef_fir_random(const ShiftModel& model, const FirSpec& f, const NoiseBudget& budget,
                            Projection projection) {
    const Scenario sc = model.random() ? Scenario::FirRandom : Scenario::FirDet;
    return plan_from_model(sc, model.size(), fir_model(model, f, budget), projection);
}

FeedbackPlan qef_fir_det(const Matrix& S, const FirSpec& f, const NoiseBudget& budget, Projection projection) {
    return qef_fir_random(ShiftModel::deterministic(S), f, budget, projection);
}

std::vector<QuadraticColumn> iir_model(const ShiftModel& model, const IirSpec& f, const NoiseBudget& budget) {
    const IirSpec s = f.sorted();
    budget.validate(s.size());
    check_stability(s, model.random() ? model.rho() : spectral_radius(model.base()));
    const Matrix outer = model.outer();
    std::vector<QuadraticColumn> cols(s.size());
    for (int k = 0; k < s.size(); ++k) {
        const cplx psi = s.branches[k].psi;
        const LyapunovResult W = model.random() ? solve_w_phi(model, psi)
                                                : solve_lyapunov_deterministic(model.base(), psi);
        auto& q = cols[k];
        q.gain = std::norm(psi) * (W.W * outer).trace();
        q.m = W.W.diagonal();
        q.c = psi * (W.W * model.mean()).diagonal().cast<cplx>();
        q.sigma2 = budget.sigma2[k];
    }
    return cols;
}

FeedbackPlan qef_iir_det(const Matrix& S, const IirSpec& f, const NoiseBudget& budget) {
    return plan_from_model(Scenario::IirDet, static_cast<int>(S.rows()),
                           iir_model(ShiftModel::deterministic(S), f, budget));
}

FeedbackPlan qef_iir_random(const ShiftModel& model, const IirSpec& f, const NoiseBudget& budget) {
    const Scenario sc = model.random() ? Scenario::IirRandom : Scenario::IirDet;
    return plan_from_model(sc, model.size(), iir_model(model, f, budget));
}

std::vector<QuadraticColumn> iir_async_model(const Matrix& S, double p, const IirSpec& f,
                                             const NoiseBudget& budget) {
    const IirSpec s = f.sorted();
    budget.validate(s.size());
    const CMatrix Sc = S.cast<cplx>();
    const CMatrix SSt = (S * S.transpose()).cast<cplx>();
    std::vector<QuadraticColumn> cols(s.size());
    for (int k = 0; k < s.size(); ++k) {
        const cplx psi = s.branches[k].psi;
        const AsyncGramian g = solve_w_p(S, psi, p);
        const CMatrix& M = g.EPWP;
        auto& q = cols[k];
        q.gain = std::norm(psi) * (M * SSt).trace().real();
        q.m = M.diagonal().real();
        q.c = psi * (M * Sc).diagonal();
        q.sigma2 = budget.sigma2[k];
    }
    return cols;
}

FeedbackPlan qef_iir_async(const Matrix& S, double p, const IirSpec& f, const NoiseBudget& budget) {
    return plan_from_model(Scenario::IirAsync, static_cast<int>(S.rows()), iir_async_model(S, p, f, budget));
}

QuadraticColumn atc_model(const Matrix& A_script, const Matrix& B_script, int M, double sigma2) {
    if (M <= 0 || A_script.rows() % M != 0) throw InvalidInput("qef_atc: block size must divide the system size");
    const LyapunovResult W = solve_w_xi(A_script, B_script);
    const Matrix K = B_script.transpose() * W.W * B_script;
    const Matrix KA = K * A_script;
    const int n = static_cast<int>(A_script.rows()) / M;
    QuadraticColumn q;
    q.gain = (A_script.transpose() * KA).trace();
    q.m = Vector::Zero(n);
    q.c = CVector::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < M; ++j) {
            q.m[i] += K(i * M + j, i * M + j);
            q.c[i] += KA(i * M + j, i * M + j);
        }
    q.sigma2 = sigma2;
    return q;
}

FeedbackPlan qef_atc(const Matrix& A_script, const Matrix& B_script, int M, double sigma2) {
    const int n = static_cast<int>(A_script.rows()) / std::max(M, 1);
    // zeta normalized per node, matching the per-node MSD.
    return plan_from_model(Scenario::AtcRegression, n, {atc_model(A_script, B_script, M, sigma2)});
}

} // namespace gqef

#include "gqef/atc.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "gqef/gramians.hpp"

namespace gqef {

Matrix RegressionProblem::A_script() const {
    const int n = nodes();
    Matrix out = Matrix::Zero(n * dim, n * dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (combine(i, j) != 0.0) out.block(i * dim, j * dim, dim, dim).diagonal().setConstant(combine(i, j));
    return out;
}

Matrix RegressionProblem::B_script() const {
    const int n = nodes();
    Matrix out = Matrix::Zero(n * dim, n * dim);
    for (int i = 0; i < n; ++i)
        out.block(i * dim, i * dim, dim, dim) = Matrix::Identity(dim, dim) - mu * A[i].transpose() * A[i];
    return out;
}

Vector RegressionProblem::gradient_step(int i, const Vector& x) const {
    return x - mu * (A[i].transpose() * (A[i] * x - b[i]));
}

RegressionProblem synth_problem(const Graph& g, int L, int M, std::uint64_t seed, double eta, double mu) {
    if (L <= 0 || M <= 0) throw InvalidInput("synth_problem: L and M must be positive");
    if (g.size() < 1) throw InvalidInput("synth_problem: empty graph");
    if (!(eta > 0.0) || !(mu > 0.0)) throw InvalidInput("synth_problem: eta and mu must be positive");
    RegressionProblem p;
    p.graph = g;
    p.rows = L;
    p.dim = M;
    p.eta = eta;
    p.mu = mu;
    const int n = g.size();
    p.laplacian = Matrix(g.degrees().asDiagonal()) - g.adjacency();
    p.combine = Matrix::Identity(n, n) - mu * eta * p.laplacian;

    Rng rng(derive_seed(seed, 0, 7));
    Eigen::SelfAdjointEigenSolver<Matrix> es(p.laplacian);
    if (es.info() != Eigen::Success) throw NumericalError("synth_problem: Laplacian eigensolver failed");
    p.smoothing_modes = (n + 3) / 4;
    Matrix z(n, M);
    for (int i = 0; i < n; ++i)
        for (int m = 0; m < M; ++m) z(i, m) = rng.normal();
    const Matrix Uk = es.eigenvectors().leftCols(p.smoothing_modes);
    p.x_star = Uk * (Uk.transpose() * z);

    for (int i = 0; i < n; ++i) {
        const double sa = rng.uniform();
        const double sv = 0.1 * rng.uniform();
        Matrix Ai(L, M);
        for (int r = 0; r < L; ++r)
            for (int c = 0; c < M; ++c) Ai(r, c) = sa * rng.normal();
        Vector v(L);
        for (int r = 0; r < L; ++r) v[r] = sv * rng.normal();
        p.b.push_back(Ai * p.x_star.row(i).transpose() + v);
        p.A.push_back(std::move(Ai));
    }
    const double rho = spectral_radius(p.B_script() * p.A_script());
    if (!(rho < 1.0))
        throw InvalidInput("synth_problem: diffusion recursion is unstable (rho = " + std::to_string(rho) + ")");
    return p;
}

const char* to_string(AtcVariant v) {
    switch (v) {
    case AtcVariant::Uncompressed: return "uncompressed";
    case AtcVariant::FullState: return "sq";
    case AtcVariant::Differential: return "dq";
    case AtcVariant::DiffErrorFeedback: return "def";
    case AtcVariant::Qef: return "qef";
    }
    return "?";
}

AtcVariant atc_variant_from_string(const std::string& s) {
    for (auto v : {AtcVariant::Uncompressed, AtcVariant::FullState, AtcVariant::Differential,
                   AtcVariant::DiffErrorFeedback, AtcVariant::Qef})
        if (s == to_string(v)) return v;
    throw InvalidInput("unknown ATC variant: " + s);
}

AtcConfig AtcConfig::standard(double mu) {
    AtcConfig c;
    c.quant.mode = QuantMode::Probabilistic;
    c.quant.step_override = 10.0 * mu;
    c.quant.range = 1e6;
    return c;
}

void AtcConfig::validate() const {
    if (iters < 1) throw InvalidInput("atc: iters must be >= 1");
    if (trials < 1) throw InvalidInput("atc: trials must be >= 1");
    if (threads < 1) throw InvalidInput("atc: threads must be >= 1");
    if (!(def_damping > 0.0 && def_damping <= 1.0)) throw InvalidInput("atc: DEF damping must be in (0,1]");
    quant.validate();
}

const AtcLaneResult& AtcResult::lane(AtcVariant v) const {
    for (const auto& l : lanes)
        if (l.variant == v) return l;
    throw InvalidInput(std::string("no ATC lane ") + to_string(v));
}

NoiseGain noise_gain_trace(const RegressionProblem& problem, const FeedbackPlan& plan) {
    if (plan.scenario != Scenario::AtcRegression || plan.columns() != 1)
        throw InvalidInput("noise_gain_trace needs a regression feedback plan");
    const auto& q = plan.model[0];
    NoiseGain g;
    const int n = problem.nodes();
    g.without = q.gain;
    g.with = q.zeta(plan.theta.col(0), n) * n / q.sigma2;
    g.ratio = g.with / g.without;
    return g;
}

namespace {

struct TrialOut {
    std::vector<Vector> err;
    std::vector<double> bits;
    std::uint64_t messages = 0;
    std::uint64_t overflow = 0;
};

struct Block {
    std::vector<Vector> sum, sumsq;
    std::vector<std::vector<double>> steady;
    std::vector<double> bits;
    std::uint64_t messages = 0;
    std::uint64_t overflow = 0;
};

} // namespace

AtcResult atc_run(const RegressionProblem& problem, const std::vector<AtcVariant>& variants, const AtcConfig& cfg) {
    cfg.validate();
    if (variants.empty()) throw InvalidInput("atc_run needs at least one variant");
    const auto start = std::chrono::steady_clock::now();
    const int n = problem.nodes();
    const int M = problem.dim;
    const std::size_t V = variants.size();

    AtcResult res;
    res.plan = qef_atc(problem.A_script(), problem.B_script(), M);
    const Vector alpha = res.plan.real_theta().col(0);

    std::vector<Matrix> Bi(n);
    Matrix drift(n, M);
    for (int i = 0; i < n; ++i) {
        Bi[i] = Matrix::Identity(M, M) - problem.mu * problem.A[i].transpose() * problem.A[i];
        drift.row(i) = (problem.mu * problem.A[i].transpose() * problem.b[i]).transpose();
    }
    const Matrix& W = problem.combine;
    const int tail = std::max(1, cfg.iters / 10);

    auto trial = [&](std::uint64_t t, Block& blk) {
        std::vector<Rng> rng(V, Rng(derive_seed(cfg.seed, t, 2)));
        std::vector<Matrix> x(V, Matrix::Zero(n, M));
        std::vector<Matrix> xhat(V, Matrix::Zero(n, M));
        std::vector<Matrix> efb(V, Matrix::Zero(n, M));
        std::vector<Vector> err(V, Vector::Zero(cfg.iters));
        OverflowCounter ovf;
        Matrix xi(n, M), sent(n, M), noise(n, M);
        for (int it = 0; it < cfg.iters; ++it) {
            for (std::size_t v = 0; v < V; ++v) {
                for (int i = 0; i < n; ++i) xi.row(i) = (Bi[i] * x[v].row(i).transpose()).transpose() + drift.row(i);
                const AtcVariant var = variants[v];
                if (var == AtcVariant::Uncompressed) {
                    x[v] = W * xi;
                } else {
                    for (int i = 0; i < n; ++i)
                        for (int m = 0; m < M; ++m) {
                            std::int64_t sym = 0;
                            double val;
                            switch (var) {
                            case AtcVariant::FullState:
                                val = quantize_scalar(xi(i, m), cfg.quant, rng[v], &sym, &ovf);
                                sent(i, m) = val;
                                break;
                            case AtcVariant::DiffErrorFeedback: {
                                const double u = xi(i, m) - xhat[v](i, m) + cfg.def_damping * efb[v](i, m);
                                const double qu = quantize_scalar(u, cfg.quant, rng[v], &sym, &ovf);
                                efb[v](i, m) = u - qu;
                                sent(i, m) = xhat[v](i, m) + qu;
                                break;
                            }
                            default:
                                val = quantize_scalar(xi(i, m) - xhat[v](i, m), cfg.quant, rng[v], &sym, &ovf);
                                sent(i, m) = xhat[v](i, m) + val;
                                break;
                            }
                            blk.bits[v] += cfg.rate.bits(sym);
                        }
                    if (var != AtcVariant::FullState) xhat[v] = sent;
                    x[v] = W * sent;
                    if (var == AtcVariant::Qef) {
                        noise = sent - xi;
                        x[v] -= alpha.asDiagonal() * noise;
                    }
                }
                if (!(x[v].cwiseAbs().maxCoeff() <= 1e6)) throw DivergenceError("ATC run diverged");
                err[v][it] = (x[v] - problem.x_star).squaredNorm() / n;
            }
            blk.messages += static_cast<std::uint64_t>(n);
        }
        for (std::size_t v = 0; v < V; ++v) {
            blk.sum[v] += err[v];
            blk.sumsq[v] += err[v].cwiseAbs2();
            blk.steady[v].push_back(err[v].tail(tail).mean());
        }
        blk.overflow += ovf.count;
    };

    const int block_size = std::max(1, (cfg.trials + 63) / 64);
    const int n_blocks = (cfg.trials + block_size - 1) / block_size;
    std::vector<Block> blocks(n_blocks);
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    auto work = [&] {
        for (;;) {
            const int bi = next.fetch_add(1);
            if (bi >= n_blocks || failed) return;
            try {
                Block b;
                b.sum.assign(V, Vector::Zero(cfg.iters));
                b.sumsq.assign(V, Vector::Zero(cfg.iters));
                b.steady.assign(V, {});
                b.bits.assign(V, 0.0);
                const int lo = bi * block_size;
                const int hi = std::min(cfg.trials, lo + block_size);
                for (int t = lo; t < hi; ++t) trial(static_cast<std::uint64_t>(t), b);
                blocks[bi] = std::move(b);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    const int threads = std::min(cfg.threads, n_blocks);
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    const double nt = cfg.trials;
    for (std::size_t v = 0; v < V; ++v) {
        AtcLaneResult lr;
        lr.variant = variants[v];
        Vector sum = Vector::Zero(cfg.iters), sumsq = Vector::Zero(cfg.iters);
        double bits = 0.0;
        std::uint64_t messages = 0;
        for (const auto& b : blocks) {
            sum += b.sum[v];
            sumsq += b.sumsq[v];
            lr.trial_steady.insert(lr.trial_steady.end(), b.steady[v].begin(), b.steady[v].end());
            bits += b.bits[v];
            messages += b.messages;
        }
        lr.msd = sum / nt;
        lr.msd_stderr = Vector::Zero(cfg.iters);
        if (cfg.trials > 1)
            lr.msd_stderr = (((sumsq - nt * lr.msd.cwiseAbs2()) / (nt - 1.0)).cwiseMax(0.0) / nt).cwiseSqrt();
        double s = 0.0;
        for (double x : lr.trial_steady) s += x;
        lr.steady = s / nt;
        double s2 = 0.0;
        for (double x : lr.trial_steady) s2 += (x - lr.steady) * (x - lr.steady);
        lr.steady_stderr = cfg.trials > 1 ? std::sqrt(s2 / (nt - 1.0) / nt) : 0.0;
        lr.rate = variants[v] == AtcVariant::Uncompressed ? std::numeric_limits<double>::quiet_NaN()
                                                          : bits / (static_cast<double>(messages) * M);
        res.lanes.push_back(std::move(lr));
    }
    for (const auto& b : blocks) res.overflow += b.overflow;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

} // namespace gqef

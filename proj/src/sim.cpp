#include "gqef/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "gqef/gramians.hpp"

namespace gqef {

const char* to_string(MsdMode m) { return m == MsdMode::Unbiased ? "unbiased" : "biased"; }

MsdMode msd_mode_from_string(const std::string& s) {
    if (s == "unbiased") return MsdMode::Unbiased;
    if (s == "biased") return MsdMode::Biased;
    throw InvalidInput("unknown msd mode: " + s);
}

void ScenarioConfig::validate() const {
    if (trials < 1) throw InvalidInput("trials must be >= 1");
    if (shift.size() == 0) throw InvalidInput("scenario needs a shift operator");
    quant.validate();
    if (!(headroom > 0.0)) throw InvalidInput("headroom must be positive");
    if (threads < 1) throw InvalidInput("threads must be >= 1");
    if (is_fir(scenario)) {
        if (fir.order() < 1) throw InvalidInput("FIR scenario needs order >= 1");
    } else if (scenario != Scenario::AtcRegression) {
        if (iir.branches.empty()) throw InvalidInput("IIR scenario needs at least one branch");
        if (iters < 1) throw InvalidInput("iters must be >= 1");
    } else {
        throw InvalidInput("run_scenario does not handle the regression scenario; use atc_run");
    }
    switch (scenario) {
    case Scenario::FirRandom:
    case Scenario::IirRandom:
        if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("edge probability must be in [0,1)");
        if (!shift.edge_model()) throw InvalidInput("random edges need an undirected graph-built operator");
        break;
    case Scenario::IirAsync:
        if (!(p > 0.0 && p <= 1.0)) throw InvalidInput("node probability must be in (0,1]");
        break;
    default: break;
    }
    if (input && input->size() != shift.size()) throw InvalidInput("input size does not match the graph");
}

const LaneResult& ScenarioResult::lane(const std::string& name) const {
    for (const auto& l : lanes)
        if (l.name == name) return l;
    throw InvalidInput("no lane named " + name);
}

namespace {

bool real_branch(const IirBranch& b) { return b.psi.imag() == 0.0 && b.phi.imag() == 0.0; }

double state_peak(const ScenarioConfig& cfg, const Vector& x) {
    const Matrix& S = cfg.shift.matrix();
    double peak = 0.0;
    if (is_fir(cfg.scenario)) {
        Vector w = x;
        for (int t = 0; t < cfg.fir.order(); ++t) {
            peak = std::max(peak, w.cwiseAbs().maxCoeff());
            w = S * w;
        }
        return peak;
    }
    const IirSpec f = cfg.iir.sorted();
    const int steps = std::min(cfg.iters, 2000);
    for (const auto& b : f.branches) {
        CVector w = CVector::Zero(x.size());
        for (int t = 0; t < steps; ++t) {
            w = iir_recursion_step(S, b.psi, b.phi, w, x);
            for (Eigen::Index i = 0; i < w.size(); ++i)
                peak = std::max({peak, std::abs(w[i].real()), std::abs(w[i].imag())});
        }
    }
    return peak;
}

// Applies S_t, either the dense base or a masked edge realization.
struct Shifter {
    const Matrix* dense = nullptr;
    const EdgeModel* edges = nullptr;
    const std::vector<std::uint8_t>* mask = nullptr;

    void apply(const Vector& x, Vector& out) const {
        if (mask)
            edges->apply(*mask, x, out);
        else
            out.noalias() = (*dense) * x;
    }
    void apply(const CVector& x, CVector& out, Vector& re, Vector& im) const {
        apply(Vector(x.real()), re);
        apply(Vector(x.imag()), im);
        out.resize(x.size());
        out.real() = re;
        out.imag() = im;
    }
};

struct Block {
    std::vector<Vector> sum, sumsq;
    std::vector<std::vector<double>> steady;
    std::vector<Vector> step_noise;
    std::uint64_t overflow = 0;
};

void guard(double v) {
    if (!(v <= 1e6)) throw DivergenceError("simulation diverged: state magnitude exceeded 1e6");
}

struct Runner {
    const ScenarioConfig& cfg;
    const std::vector<Lane>& lanes;
    Vector x;
    int n = 0;
    int n_index = 0;
    std::vector<CMatrix> theta;
    IirSpec sorted;
    Matrix St;         // transposed shift, for row-wise asynchronous updates
    CVector ref_fixed; // deterministic or biased reference
    bool realized_ref = false;
    int tail = 1;

    Runner(const ScenarioConfig& c, const std::vector<Lane>& l) : cfg(c), lanes(l) {
        x = scenario_input(cfg);
        n = cfg.shift.size();
        const Matrix& S = cfg.shift.matrix();
        if (cfg.scenario == Scenario::IirAsync) St = S.transpose();
        const bool random = cfg.scenario == Scenario::FirRandom || cfg.scenario == Scenario::IirRandom;
        realized_ref = random && cfg.msd_mode == MsdMode::Unbiased;
        int cols;
        if (is_fir(cfg.scenario)) {
            cols = cfg.fir.order();
            n_index = 1;
            if (!realized_ref) {
                const Matrix base = random ? expected_shift(cfg.shift, cfg.p) : S;
                ref_fixed = fir_exact(base, cfg.fir, x).cast<cplx>();
            }
        } else {
            sorted = cfg.iir.sorted();
            cols = sorted.size();
            n_index = cfg.iters;
            tail = std::max(1, cfg.iters / 10);
            if (!realized_ref) {
                const Matrix base = random ? expected_shift(cfg.shift, cfg.p) : S;
                ref_fixed = iir_exact_complex(base, sorted, x);
            }
        }
        for (const auto& lane : lanes) {
            if (lane.theta.size() == 0) {
                theta.push_back(CMatrix::Zero(n, cols));
            } else {
                if (lane.theta.rows() != n || lane.theta.cols() != cols)
                    throw InvalidInput("lane '" + lane.name + "': feedback matrix has the wrong shape");
                theta.push_back(lane.theta);
            }
        }
    }

    Block make_block() const {
        Block b;
        const auto L = lanes.size();
        b.sum.assign(L, Vector::Zero(n_index));
        b.sumsq.assign(L, Vector::Zero(n_index));
        b.steady.assign(L, {});
        if (cfg.record_step_noise && is_fir(cfg.scenario)) b.step_noise.assign(L, Vector::Zero(cfg.fir.order()));
        return b;
    }

    void record(Block& b, std::size_t lane, const Vector& err) const {
        b.sum[lane] += err;
        b.sumsq[lane] += err.cwiseAbs2();
        b.steady[lane].push_back(err.tail(std::min<Eigen::Index>(tail, err.size())).mean());
    }

    template <class V>
    void quantize(const V& w, Rng& rng, V& q, V& nn, OverflowCounter& ovf) const {
        if (cfg.quantize) {
            quantize_into(w, cfg.quant, rng, q, nn, &ovf);
        } else {
            q = w;
            nn = V::Zero(w.size());
        }
    }

    void fir_trial(std::uint64_t trial, Block& b) const {
        const int T = cfg.fir.order();
        const Vector& phi = cfg.fir.coeffs;
        std::vector<std::vector<std::uint8_t>> masks;
        const bool random = cfg.scenario == Scenario::FirRandom;
        if (random) {
            EdgeSampler sampler(cfg.shift, cfg.p, derive_seed(cfg.seed, trial, 1));
            for (int t = 0; t < T; ++t) masks.push_back(sampler.sample_mask());
        }
        auto shifter = [&](int t) {
            Shifter s;
            s.dense = &cfg.shift.matrix();
            if (random) {
                s.edges = &*cfg.shift.edge_model();
                s.mask = &masks[t];
            }
            return s;
        };
        Vector yref;
        Vector tmp(n);
        if (realized_ref) {
            Vector w = x;
            yref = phi[0] * x;
            for (int t = 1; t <= T; ++t) {
                shifter(t - 1).apply(w, tmp);
                w = tmp;
                yref += phi[t] * w;
            }
        } else {
            yref = ref_fixed.real();
        }
        OverflowCounter ovf;
        std::vector<Vector> noise(T);
        Vector q, nn;
        for (std::size_t l = 0; l < lanes.size(); ++l) {
            Rng qr(derive_seed(cfg.seed, trial, 2));
            const Matrix D = theta[l].real();
            Vector w = x;
            Vector y = phi[0] * x;
            for (int t = 1; t <= T; ++t) {
                quantize(w, qr, q, nn, ovf);
                shifter(t - 1).apply(q, tmp);
                w = tmp - D.col(t - 1).cwiseProduct(nn);
                guard(w.cwiseAbs().maxCoeff());
                y += phi[t] * w;
                if (!b.step_noise.empty()) noise[t - 1] = nn;
            }
            Vector err(1);
            err[0] = (y - yref).squaredNorm() / n;
            record(b, l, err);
            if (!b.step_noise.empty()) {
                for (int s = 0; s < T; ++s) {
                    Vector e(n);
                    shifter(s).apply(noise[s], e);
                    e -= D.col(s).cwiseProduct(noise[s]);
                    Vector out = phi[s + 1] * e;
                    for (int t = s + 2; t <= T; ++t) {
                        shifter(t - 1).apply(e, tmp);
                        e = tmp;
                        out += phi[t] * e;
                    }
                    b.step_noise[l][s] += out.squaredNorm() / n;
                }
            }
        }
        b.overflow += ovf.count;
    }

    void iir_trial(std::uint64_t trial, Block& b) const {
        const int K = sorted.size();
        const bool random = cfg.scenario == Scenario::IirRandom;
        const bool async = cfg.scenario == Scenario::IirAsync;
        const Matrix& S = cfg.shift.matrix();
        std::optional<EdgeSampler> edges;
        std::optional<NodeSampler> nodes;
        if (random) edges.emplace(cfg.shift, cfg.p, derive_seed(cfg.seed, trial, 1));
        if (async) nodes.emplace(n, cfg.p, derive_seed(cfg.seed, trial, 1));
        const std::size_t L = lanes.size();
        std::vector<Rng> qr(L, Rng(derive_seed(cfg.seed, trial, 2)));
        std::vector<std::vector<CVector>> w(L, std::vector<CVector>(K, CVector::Zero(n)));
        std::vector<CVector> wr(realized_ref ? K : 0, CVector::Zero(n));
        std::vector<Vector> err(L, Vector::Zero(cfg.iters));
        const CVector xc = x.cast<cplx>();
        OverflowCounter ovf;
        Shifter sh;
        sh.dense = &S;
        if (random) sh.edges = &*cfg.shift.edge_model();
        CVector Sq(n), y(n), yref(n);
        Vector re(n), im(n), qr_re, nr_re;
        CVector qc, nc;
        for (int it = 0; it < cfg.iters; ++it) {
            if (random) sh.mask = &edges->sample_mask();
            const std::vector<std::uint8_t>* sel = async ? &nodes->sample_mask() : nullptr;
            if (realized_ref) {
                yref.setZero();
                for (int k = 0; k < K; ++k) {
                    sh.apply(wr[k], Sq, re, im);
                    wr[k] = sorted.branches[k].psi * Sq + sorted.branches[k].phi * xc;
                    yref += wr[k];
                }
            } else {
                yref = ref_fixed;
            }
            for (std::size_t l = 0; l < L; ++l) {
                y.setZero();
                for (int k = 0; k < K; ++k) {
                    const auto& br = sorted.branches[k];
                    CVector& wk = w[l][k];
                    if (real_branch(br)) {
                        quantize(Vector(wk.real()), qr[l], qr_re, nr_re, ovf);
                        qc = qr_re.cast<cplx>();
                        nc = nr_re.cast<cplx>();
                    } else {
                        quantize(wk, qr[l], qc, nc, ovf);
                    }
                    const auto d = theta[l].col(k);
                    if (async) {
                        re = qc.real();
                        im = qc.imag();
                        for (int i = 0; i < n; ++i) {
                            if (!(*sel)[i]) continue;
                            const cplx s(St.col(i).dot(re), St.col(i).dot(im));
                            wk[i] = br.psi * s + br.phi * x[i] - d[i] * nc[i];
                        }
                    } else {
                        sh.apply(qc, Sq, re, im);
                        wk = br.psi * Sq + br.phi * xc - d.cwiseProduct(nc);
                    }
                    y += wk;
                }
                guard(y.cwiseAbs().maxCoeff());
                err[l][it] = (y - yref).squaredNorm() / n;
            }
        }
        for (std::size_t l = 0; l < L; ++l) record(b, l, err[l]);
        b.overflow += ovf.count;
    }
};

} // namespace

Vector scenario_input(const ScenarioConfig& cfg) {
    if (cfg.input) return *cfg.input;
    const int n = cfg.shift.size();
    Rng rng(derive_seed(cfg.seed, 0, 3));
    Vector x(n);
    if (cfg.shift.symmetric()) {
        Vector s(n);
        for (int i = 0; i < n; ++i) s[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        x = cfg.shift.spectrum().U.real() * s;
    } else {
        for (int i = 0; i < n; ++i) x[i] = rng.normal();
    }
    const double peak = state_peak(cfg, x);
    if (!(peak > 0.0)) return x;
    return x * (cfg.headroom * cfg.quant.range / peak);
}

NoiseBudget scenario_budget(const ScenarioConfig& cfg) {
    const int n = cfg.shift.size();
    if (is_fir(cfg.scenario)) {
        QuantizerConfig q = cfg.quant;
        q.complex_flag = false;
        return NoiseBudget::uniform(n, cfg.fir.order(), q.noise_variance());
    }
    return iir_noise_budget(cfg.iir, cfg.quant, n);
}

FeedbackPlan scenario_plan(const ScenarioConfig& cfg) {
    const NoiseBudget budget = scenario_budget(cfg);
    const Matrix& S = cfg.shift.matrix();
    switch (cfg.scenario) {
    case Scenario::FirDet: return qef_fir_det(S, cfg.fir, budget);
    case Scenario::FirRandom: return qef_fir_random(ShiftModel::edges(cfg.shift, cfg.p), cfg.fir, budget);
    case Scenario::IirDet: return qef_iir_det(S, cfg.iir, budget);
    case Scenario::IirRandom: return qef_iir_random(ShiftModel::edges(cfg.shift, cfg.p), cfg.iir, budget);
    case Scenario::IirAsync: return qef_iir_async(S, cfg.p, cfg.iir, budget);
    case Scenario::AtcRegression: break;
    }
    throw InvalidInput("scenario_plan: regression plans come from qef_atc");
}

std::vector<Lane> default_lanes(const ScenarioConfig& cfg) {
    return {{"none", CMatrix()}, {"qef", scenario_plan(cfg).theta}};
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::vector<Lane>& lanes) {
    cfg.validate();
    if (lanes.empty()) throw InvalidInput("run_scenario needs at least one lane");
    const auto start = std::chrono::steady_clock::now();
    const Runner runner(cfg, lanes);
    // Fixed block partition: the reduction order never depends on thread count.
    const int block_size = std::max(1, (cfg.trials + 63) / 64);
    const int n_blocks = (cfg.trials + block_size - 1) / block_size;
    std::vector<Block> blocks(n_blocks);
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (;;) {
            const int bi = next.fetch_add(1);
            if (bi >= n_blocks || failed) return;
            try {
                Block b = runner.make_block();
                const int lo = bi * block_size;
                const int hi = std::min(cfg.trials, lo + block_size);
                for (int t = lo; t < hi; ++t) {
                    if (is_fir(cfg.scenario))
                        runner.fir_trial(static_cast<std::uint64_t>(t), b);
                    else
                        runner.iir_trial(static_cast<std::uint64_t>(t), b);
                }
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

    ScenarioResult res;
    res.scenario = cfg.scenario;
    res.trials = cfg.trials;
    res.seed = cfg.seed;
    res.input = runner.x;
    if (is_fir(cfg.scenario))
        res.index = {cfg.fir.order()};
    else
        for (int i = 1; i <= cfg.iters; ++i) res.index.push_back(i);
    Block total = runner.make_block();
    for (auto& b : blocks) {
        for (std::size_t l = 0; l < lanes.size(); ++l) {
            total.sum[l] += b.sum[l];
            total.sumsq[l] += b.sumsq[l];
            total.steady[l].insert(total.steady[l].end(), b.steady[l].begin(), b.steady[l].end());
            if (!total.step_noise.empty()) total.step_noise[l] += b.step_noise[l];
        }
        total.overflow += b.overflow;
    }
    const double nt = cfg.trials;
    for (std::size_t l = 0; l < lanes.size(); ++l) {
        LaneResult lr;
        lr.name = lanes[l].name;
        lr.msd = total.sum[l] / nt;
        lr.msd_stderr = Vector::Zero(lr.msd.size());
        if (cfg.trials > 1) {
            const Vector var = ((total.sumsq[l] - nt * lr.msd.cwiseAbs2()) / (nt - 1.0)).cwiseMax(0.0);
            lr.msd_stderr = (var / nt).cwiseSqrt();
        }
        lr.trial_steady = std::move(total.steady[l]);
        double s = 0.0, s2 = 0.0;
        for (double v : lr.trial_steady) s += v;
        lr.steady = s / nt;
        for (double v : lr.trial_steady) s2 += (v - lr.steady) * (v - lr.steady);
        lr.steady_stderr = cfg.trials > 1 ? std::sqrt(s2 / (nt - 1.0) / nt) : 0.0;
        if (!total.step_noise.empty()) lr.step_noise = total.step_noise[l] / nt;
        res.lanes.push_back(std::move(lr));
    }
    res.overflow = total.overflow;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

std::vector<OrderPoint> sweep_orders(const ScenarioConfig& cfg, const std::vector<int>& orders,
                                     const std::function<FirSpec(int)>& design) {
    if (!is_fir(cfg.scenario)) throw InvalidInput("sweep_orders applies to FIR scenarios");
    std::vector<OrderPoint> out;
    for (int T : orders) {
        ScenarioConfig c = cfg;
        c.fir = design(T);
        if (c.fir.order() != T) throw InvalidInput("designer returned the wrong order");
        OrderPoint pt;
        pt.order = T;
        pt.plan = scenario_plan(c);
        pt.result = run_scenario(c, {{"none", CMatrix()}, {"qef", pt.plan.theta}});
        out.push_back(std::move(pt));
    }
    return out;
}

double empirical_variance_floor(const ScenarioConfig& cfg) {
    if (cfg.scenario != Scenario::FirRandom && cfg.scenario != Scenario::IirRandom)
        throw InvalidInput("variance floor needs a random-graph scenario");
    ScenarioConfig c = cfg;
    c.quantize = false;
    c.msd_mode = MsdMode::Biased;
    if (c.p == 1.0) return 0.0;
    return run_scenario(c, {{"floor", CMatrix()}}).lanes[0].steady;
}

} // namespace gqef

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "gqef/config.hpp"
#include "gqef/gramians.hpp"

#ifndef GQEF_VERSION
#define GQEF_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace gqef;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = "out";
    std::string format = "csv";
    std::string feedback;
};

int effective_threads(const Options& o) {
    const char* det = std::getenv("GQEF_DETERMINISTIC");
    if (det && std::string(det) == "1") return 1;
    if (o.threads > 0) return o.threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("--out", "cannot write " + p.string());
    out << s;
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

Json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Json mat_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
    return rows;
}

class Manifest {
public:
    Manifest(std::string command, const Options& o) : start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["version"] = GQEF_VERSION;
        j_["threads"] = effective_threads(o);
        j_["warnings"] = Json::array();
        j_["outputs"] = Json::array();
    }
    Json& operator[](const char* k) { return j_[k]; }
    void warn(const std::string& w) { j_["warnings"].push_back(w); }
    void output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }
    void write(const fs::path& dir) {
        j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json(dir / "manifest.json", j_);
    }

private:
    Json j_;
    std::chrono::steady_clock::time_point start_;
};

Json read_config(Options& o) {
    if (o.config.empty()) throw ConfigError("--config", "missing required option");
    return load_json(o.config);
}

fs::path out_dir(const Options& o) {
    fs::path d(o.out);
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw ConfigError("--out", "cannot create " + d.string());
    return d;
}

void apply_seed(Json& cfg, const char* section, const char* key, const Options& o) {
    if (o.seed && cfg.contains(section) && cfg[section].is_object()) cfg[section][key] = *o.seed;
}

int cmd_graph(Options& o) {
    Json cfg = read_config(o);
    apply_seed(cfg, "graph", "seed", o);
    const Json& gj = cfg.contains("graph") ? cfg.at("graph") : throw ConfigError("graph", "missing required section");
    const GraphConfig gc = parse_graph(gj);
    const Graph g = make_graph(gc);
    const ShiftOperator S = build_shift(g, gc.kind);
    const fs::path dir = out_dir(o);
    Manifest m("graph", o);
    m["config"] = cfg;
    std::ostringstream edges;
    write_edge_list(edges, g);
    write_text(dir / "edges.txt", edges.str());
    m.output(dir / "edges.txt");
    write_json(dir / "graph.json", {{"nodes", g.size()},
                                    {"edges", g.edge_count()},
                                    {"kind", to_string(S.kind())},
                                    {"spectral_radius", S.spectral_radius()},
                                    {"connected", g.connected()}});
    m.output(dir / "graph.json");
    m.write(dir);
    return 0;
}

int cmd_design_fir(Options& o) {
    Json cfg = read_config(o);
    const RunConfig rc = parse_run_config(cfg);
    if (!is_fir(rc.scenario.scenario) || !rc.filter.design)
        throw ConfigError("filter.design", "design-fir needs an FIR scenario with filter.design");
    const auto target = DesignTarget::lowpass(rc.filter.cutoff, rc.filter.delta, rc.filter.points);
    const auto& sc = rc.scenario;
    const bool random = sc.scenario == Scenario::FirRandom;
    const FirDesignReport rep = random ? design_fir_random(sc.p, sc.shift.spectral_radius(), target, rc.filter.order)
                                       : design_fir_det(sc.shift.matrix(), target, rc.filter.order);
    const fs::path dir = out_dir(o);
    Manifest m("design-fir", o);
    m["config"] = cfg;
    write_json(dir / "filter.json", to_json(rep.filter));
    write_json(dir / "design_report.json", {{"error", rep.error},
                                            {"ls_error", rep.ls_error},
                                            {"regularizer", rep.regularizer},
                                            {"multiplier", rep.multiplier},
                                            {"constraint_active", rep.constraint_active},
                                            {"delta", rc.filter.delta}});
    m.output(dir / "filter.json");
    m.output(dir / "design_report.json");
    m.write(dir);
    return 0;
}

int cmd_design_iir(Options& o) {
    Json cfg = read_config(o);
    RunConfig rc = parse_run_config(cfg);
    if (is_fir(rc.scenario.scenario) || !rc.filter.design)
        throw ConfigError("filter.design", "design-iir needs an IIR scenario with filter.design");
    const auto target = DesignTarget::lowpass(rc.filter.cutoff, rc.filter.delta, rc.filter.points);
    IirDesignOptions opt = rc.filter.iir_options;
    opt.rho = rc.scenario.shift.spectral_radius();
    const IirDesignReport rep = design_iir(&rc.scenario.shift, target, rc.filter.iir, opt);
    const fs::path dir = out_dir(o);
    Manifest m("design-iir", o);
    m["config"] = cfg;
    if (!rep.warning.empty()) m.warn(rep.warning);
    write_json(dir / "filter.json", to_json(rep.filter));
    write_json(dir / "design_report.json", {{"error", rep.error},
                                            {"regularizer", rep.regularizer},
                                            {"objective", rep.objective},
                                            {"iterations", rep.iterations},
                                            {"winning_start", rep.winning_start},
                                            {"trace", rep.trace},
                                            {"delta", rc.filter.delta},
                                            {"warning", rep.warning}});
    m.output(dir / "filter.json");
    m.output(dir / "design_report.json");
    m.write(dir);
    return 0;
}

int cmd_qef(Options& o) {
    Json cfg = read_config(o);
    const RunConfig rc = parse_run_config(cfg);
    const FeedbackPlan plan = scenario_plan(rc.scenario);
    const fs::path dir = out_dir(o);
    Manifest m("qef", o);
    m["config"] = cfg;
    if (!plan.degenerate.empty())
        m.warn(std::to_string(plan.degenerate.size()) + " node/column pairs without feedback (zero diagonal)");
    write_json(dir / "plan.json", to_json(plan));
    m.output(dir / "plan.json");
    m.write(dir);
    return 0;
}

int cmd_gramian(Options& o) {
    Json cfg = read_config(o);
    const RunConfig rc = parse_run_config(cfg);
    const auto& sc = rc.scenario;
    Json entries = Json::array();
    if (is_fir(sc.scenario)) {
        const ShiftModel model = sc.scenario == Scenario::FirRandom ? ShiftModel::edges(sc.shift, sc.p)
                                                                    : ShiftModel::deterministic(sc.shift);
        const auto G = expected_fir_grams(model, sc.fir.coeffs);
        for (std::size_t k = 0; k < G.size(); ++k) {
            const Matrix direct = expected_fir_gram(model, sc.fir.coeffs, static_cast<int>(k) + 1);
            entries.push_back({{"label", "E[G_" + std::to_string(k) + "]"},
                               {"method", "backward recursion"},
                               {"cross_check_difference", (direct - G[k]).norm()},
                               {"W", mat_json(G[k])}});
        }
    } else {
        const IirSpec f = sc.iir.sorted();
        for (int k = 0; k < f.size(); ++k) {
            const cplx psi = f.branches[k].psi;
            Json e{{"label", "branch " + std::to_string(k)}};
            if (sc.scenario == Scenario::IirAsync) {
                const AsyncGramian g = solve_w_p(sc.shift.matrix(), psi, sc.p);
                e["method"] = "fixed-point";
                e["residual"] = g.residual;
                e["iterations"] = g.iterations;
                e["contraction"] = g.contraction;
                e["W_re"] = mat_json(g.W.real());
                e["W_im"] = mat_json(g.W.imag());
            } else {
                const LyapunovResult r = sc.scenario == Scenario::IirRandom
                                             ? solve_w_phi(ShiftModel::edges(sc.shift, sc.p), psi)
                                             : solve_lyapunov_deterministic(sc.shift, psi);
                e["method"] = r.method;
                e["residual"] = r.residual;
                e["iterations"] = r.iterations;
                e["W"] = mat_json(r.W);
            }
            entries.push_back(e);
        }
    }
    const fs::path dir = out_dir(o);
    Manifest m("gramian", o);
    m["config"] = cfg;
    write_json(dir / "gramian.json", {{"scenario", to_string(sc.scenario)}, {"entries", entries}});
    m.output(dir / "gramian.json");
    m.write(dir);
    return 0;
}

void write_curve(const fs::path& p, const std::vector<int>& index, const LaneResult& l) {
    std::ostringstream s;
    s << "index,msd_linear,msd_db,stderr_db\n";
    for (std::size_t i = 0; i < index.size(); ++i) {
        const double v = l.msd[static_cast<Eigen::Index>(i)];
        const double se = l.msd_stderr[static_cast<Eigen::Index>(i)];
        const double se_db = v > 0.0 ? 10.0 / std::log(10.0) * se / v : 0.0;
        s << index[i] << ',' << format_number(v) << ',' << format_number(to_db(v)) << ',' << format_number(se_db)
          << '\n';
    }
    write_text(p, s.str());
}

int cmd_simulate(Options& o) {
    Json cfg = read_config(o);
    apply_seed(cfg, "scenario", "seed", o);
    RunConfig rc = parse_run_config(cfg);
    rc.scenario.threads = effective_threads(o);
    const FeedbackPlan plan = scenario_plan(rc.scenario);
    std::vector<Lane> lanes{{"none", CMatrix()}};
    if (rc.feedback) {
        CMatrix theta = plan.theta;
        if (!o.feedback.empty())
            theta = theta_from_json(load_json(o.feedback), rc.scenario.scenario, static_cast<int>(plan.theta.rows()),
                                    static_cast<int>(plan.theta.cols()));
        lanes.push_back({"qef", theta});
    }
    const ScenarioResult res = run_scenario(rc.scenario, lanes);
    const fs::path dir = out_dir(o);
    Manifest m("simulate", o);
    m["config"] = cfg;
    m["seeds"] = {{"base", rc.scenario.seed}, {"graph", rc.graph.seed}};
    m["trials"] = res.trials;
    m["overflow_count"] = res.overflow;
    m["predicted_zeta"] = plan.total_zeta();
    m["predicted_zeta_baseline"] = plan.total_baseline();
    m["feedback_file"] = o.feedback;
    if (res.overflow) m.warn(std::to_string(res.overflow) + " quantizer inputs were clamped");
    Json steady = Json::object();
    for (const auto& l : res.lanes) {
        const fs::path p = dir / (l.name + ".csv");
        write_curve(p, res.index, l);
        m.output(p);
        steady[l.name] = {{"msd", l.steady}, {"msd_db", to_db(l.steady)}, {"stderr", l.steady_stderr}};
    }
    m["steady"] = steady;
    m.write(dir);
    return 0;
}

int cmd_atc(Options& o) {
    Json cfg = read_config(o);
    apply_seed(cfg, "atc", "seed", o);
    AtcRunConfig rc = parse_atc_config(cfg);
    rc.run.threads = effective_threads(o);
    const Graph g = make_graph(rc.graph);
    const RegressionProblem prob = synth_problem(g, rc.L, rc.M, rc.problem_seed, rc.eta, rc.mu);
    const AtcResult res = atc_run(prob, rc.variants, rc.run);
    const NoiseGain gain = noise_gain_trace(prob, res.plan);
    const fs::path dir = out_dir(o);
    Manifest m("atc", o);
    m["config"] = cfg;
    m["seeds"] = {{"base", rc.run.seed}, {"problem", rc.problem_seed}, {"graph", rc.graph.seed}};
    m["smoothing_modes"] = prob.smoothing_modes;
    m["noise_gain"] = {{"without", gain.without}, {"with", gain.with}, {"ratio", gain.ratio}};
    m["overflow_count"] = res.overflow;
    Json steady = Json::object();
    for (const auto& l : res.lanes) {
        std::ostringstream s;
        s << "iter,msd_db,rate_bits\n";
        for (Eigen::Index i = 0; i < l.msd.size(); ++i)
            s << (i + 1) << ',' << format_number(to_db(l.msd[i])) << ',' << format_number(l.rate) << '\n';
        const fs::path p = dir / (std::string(to_string(l.variant)) + ".csv");
        write_text(p, s.str());
        m.output(p);
        steady[to_string(l.variant)] = {{"msd_db", to_db(l.steady)}, {"rate_bits", l.rate}};
    }
    m["steady"] = steady;
    m.write(dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantization error feedback for distributed graph filtering"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON configuration file")->required();
        sub->add_option("--seed", o.seed, "override the base seed");
        sub->add_option("--threads", o.threads, "worker threads (default: hardware)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv"}));
    };
    struct Cmd {
        const char* name;
        const char* help;
        int (*run)(Options&);
    };
    const Cmd cmds[] = {
        {"graph", "build a graph and its shift operator", cmd_graph},
        {"design-fir", "regularized FIR low-pass design", cmd_design_fir},
        {"design-iir", "regularized IIR low-pass design", cmd_design_iir},
        {"qef", "closed-form feedback coefficients", cmd_qef},
        {"gramian", "dump Gramians and residuals", cmd_gramian},
        {"simulate", "Monte-Carlo MSD with and without feedback", cmd_simulate},
        {"atc", "quantized diffusion regression", cmd_atc},
    };
    int (*selected)(Options&) = nullptr;
    for (const auto& c : cmds) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        if (std::string(c.name) == "simulate") sub->add_option("--feedback", o.feedback, "feedback plan JSON");
        sub->callback([&selected, run = c.run] { selected = run; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        return selected(o);
    } catch (const ConfigError& e) {
        std::cerr << "error[config] field=" << e.field() << ": " << e.what() << "\n";
        return 2;
    } catch (const InvalidInput& e) {
        std::cerr << "error[invalid-input]: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error[numerical]: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}

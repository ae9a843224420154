#include "gqef/config.hpp"

#include <cstdio>
#include <fstream>

namespace gqef {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const Json& section(const Json& root, const char* key, const std::string& path) {
    if (!root.contains(key)) throw ConfigError(join(path, key), "missing required section");
    const Json& s = root.at(key);
    if (!s.is_object()) throw ConfigError(join(path, key), "expected an object");
    return s;
}

template <class T>
T read(const Json& obj, const char* key, const std::string& path) {
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(join(path, key), std::string("wrong type: ") + e.what());
    }
}

template <class T>
T require(const Json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) throw ConfigError(join(path, key), "missing required field");
    return read<T>(obj, key, path);
}

template <class T>
T optional(const Json& obj, const char* key, const std::string& path, T def) {
    if (!obj.contains(key)) return def;
    return read<T>(obj, key, path);
}

template <class F>
auto field(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InvalidInput& e) {
        throw ConfigError(path, e.what());
    }
}

} // namespace

void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(join(path, it.key()), "unknown key");
    }
}

Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open file");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
}

GraphConfig parse_graph(const Json& j, const std::string& path) {
    check_keys(j, path, {"type", "nodes", "radius", "seed", "path", "kind"});
    GraphConfig g;
    g.type = optional<std::string>(j, "type", path, g.type);
    g.nodes = optional<int>(j, "nodes", path, g.nodes);
    g.radius = optional<double>(j, "radius", path, g.radius);
    g.seed = optional<std::uint64_t>(j, "seed", path, g.seed);
    g.path = optional<std::string>(j, "path", path, "");
    if (j.contains("kind"))
        g.kind = field(join(path, "kind"), [&] { return shift_kind_from_string(read<std::string>(j, "kind", path)); });
    if (g.type == "edge_list") {
        if (g.path.empty()) throw ConfigError(join(path, "path"), "missing required field");
    } else if (g.type != "sensor" && g.type != "ring" && g.type != "path") {
        throw ConfigError(join(path, "type"), "expected sensor, edge_list, ring or path");
    }
    if (g.type != "edge_list" && g.nodes < 2) throw ConfigError(join(path, "nodes"), "must be >= 2");
    return g;
}

Graph make_graph(const GraphConfig& g) {
    if (g.type == "edge_list") return load_edge_list(g.path, g.nodes > 0 ? g.nodes : -1);
    if (g.type == "sensor") return gen_sensor_graph(g.nodes, g.radius, g.seed);
    std::vector<Edge> edges;
    for (int i = 0; i + 1 < g.nodes; ++i) edges.push_back({i, i + 1, 1.0});
    if (g.type == "ring" && g.nodes > 2) edges.push_back({0, g.nodes - 1, 1.0});
    return Graph(g.nodes, edges);
}

FilterConfig parse_filter(const Json& j, const std::string& path) {
    check_keys(j, path, {"type", "coeffs", "branches", "preset", "design"});
    FilterConfig f;
    f.type = require<std::string>(j, "type", path);
    if (f.type == "fir") {
        if (j.contains("coeffs")) {
            const auto c = read<std::vector<double>>(j, "coeffs", path);
            if (c.empty()) throw ConfigError(join(path, "coeffs"), "must not be empty");
            f.fir.coeffs = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
        } else if (j.contains("design")) {
            const std::string dp = join(path, "design");
            const Json& d = j.at("design");
            check_keys(d, dp, {"order", "delta", "cutoff", "points"});
            f.design = true;
            f.order = require<int>(d, "order", dp);
            f.delta = optional<double>(d, "delta", dp, f.delta);
            f.cutoff = optional<double>(d, "cutoff", dp, f.cutoff);
            f.points = optional<int>(d, "points", dp, f.points);
            if (f.order < 1) throw ConfigError(join(dp, "order"), "must be >= 1");
        } else {
            throw ConfigError(join(path, "coeffs"), "missing required field (or give filter.design)");
        }
    } else if (f.type == "iir") {
        if (j.contains("branches")) {
            const auto br = read<std::vector<std::vector<double>>>(j, "branches", path);
            for (std::size_t k = 0; k < br.size(); ++k) {
                if (br[k].size() != 4)
                    throw ConfigError(join(path, "branches[" + std::to_string(k) + "]"),
                                      "expected [re_psi, im_psi, re_phi, im_phi]");
                f.iir.branches.push_back({cplx(br[k][0], br[k][1]), cplx(br[k][2], br[k][3])});
            }
        } else if (j.contains("preset")) {
            f.preset = read<std::string>(j, "preset", path);
            f.iir = field(join(path, "preset"), [&] { return iir_preset(f.preset); });
        } else {
            throw ConfigError(join(path, "branches"), "missing required field (or give filter.preset)");
        }
        if (f.iir.branches.empty()) throw ConfigError(join(path, "branches"), "must not be empty");
        if (j.contains("design")) {
            const std::string dp = join(path, "design");
            const Json& d = j.at("design");
            check_keys(d, dp, {"gamma", "delta", "cutoff", "points", "starts", "seed", "max_iters", "regularizer"});
            f.design = true;
            auto& o = f.iir_options;
            o.gamma = optional<double>(d, "gamma", dp, o.gamma);
            f.delta = optional<double>(d, "delta", dp, 0.055);
            f.cutoff = optional<double>(d, "cutoff", dp, f.cutoff);
            f.points = optional<int>(d, "points", dp, f.points);
            o.starts = optional<int>(d, "starts", dp, o.starts);
            o.seed = optional<std::uint64_t>(d, "seed", dp, o.seed);
            o.max_iters = optional<int>(d, "max_iters", dp, o.max_iters);
            const auto r = optional<std::string>(d, "regularizer", dp, "iir_det");
            if (r == "iir_det")
                o.regularizer = RegularizerKind::IirDet;
            else if (r == "iir_random")
                o.regularizer = RegularizerKind::IirRandom;
            else
                throw ConfigError(join(dp, "regularizer"), "expected iir_det or iir_random");
        }
    } else {
        throw ConfigError(join(path, "type"), "expected fir or iir");
    }
    return f;
}

QuantizerConfig parse_quantizer(const Json& j, const std::string& path) {
    check_keys(j, path, {"bits", "range", "mode", "complex", "step"});
    QuantizerConfig q;
    q.bits = optional<int>(j, "bits", path, q.bits);
    q.range = optional<double>(j, "range", path, q.range);
    if (j.contains("mode"))
        q.mode = field(join(path, "mode"), [&] { return quant_mode_from_string(read<std::string>(j, "mode", path)); });
    q.complex_flag = optional<bool>(j, "complex", path, false);
    q.step_override = optional<double>(j, "step", path, 0.0);
    field(path, [&] {
        q.validate();
        return 0;
    });
    return q;
}

RunConfig parse_run_config(const Json& root) {
    check_keys(root, "", {"graph", "filter", "quantizer", "scenario", "feedback"});
    RunConfig rc;
    rc.raw = root;
    rc.graph = parse_graph(section(root, "graph", ""), "graph");
    rc.filter = parse_filter(section(root, "filter", ""), "filter");
    auto& sc = rc.scenario;
    sc.quant = root.contains("quantizer") ? parse_quantizer(section(root, "quantizer", ""), "quantizer")
                                          : QuantizerConfig{};
    const Json& s = section(root, "scenario", "");
    check_keys(s, "scenario",
               {"type", "p", "trials", "iters", "msd", "headroom", "seed", "record_step_noise", "threads"});
    sc.scenario = field("scenario.type", [&] { return scenario_from_string(require<std::string>(s, "type", "scenario")); });
    if (sc.scenario == Scenario::AtcRegression) throw ConfigError("scenario.type", "use the atc subcommand");
    sc.p = optional<double>(s, "p", "scenario", 1.0);
    sc.trials = optional<int>(s, "trials", "scenario", sc.trials);
    sc.iters = optional<int>(s, "iters", "scenario", sc.iters);
    sc.seed = optional<std::uint64_t>(s, "seed", "scenario", sc.seed);
    sc.headroom = optional<double>(s, "headroom", "scenario", sc.headroom);
    sc.threads = optional<int>(s, "threads", "scenario", 1);
    sc.record_step_noise = optional<bool>(s, "record_step_noise", "scenario", false);
    if (s.contains("msd"))
        sc.msd_mode = field("scenario.msd", [&] { return msd_mode_from_string(read<std::string>(s, "msd", "scenario")); });
    if (root.contains("feedback")) {
        const Json& fb = section(root, "feedback", "");
        check_keys(fb, "feedback", {"enabled"});
        rc.feedback = optional<bool>(fb, "enabled", "feedback", true);
    }
    const bool fir = is_fir(sc.scenario);
    if (fir != (rc.filter.type == "fir")) throw ConfigError("filter.type", "does not match scenario.type");

    const Graph g = field("graph", [&] { return make_graph(rc.graph); });
    sc.shift = field("graph.kind", [&] { return build_shift(g, rc.graph.kind); });
    const bool random_edges = sc.scenario == Scenario::FirRandom || sc.scenario == Scenario::IirRandom;
    if (fir) {
        sc.fir = rc.filter.fir;
        if (rc.filter.design) {
            const auto target = field("filter.design", [&] {
                return DesignTarget::lowpass(rc.filter.cutoff, rc.filter.delta, rc.filter.points);
            });
            sc.fir = field("filter.design", [&] {
                           return random_edges
                                      ? design_fir_random(sc.p, sc.shift.spectral_radius(), target, rc.filter.order)
                                      : design_fir_det(sc.shift.matrix(), target, rc.filter.order);
                       }).filter;
        }
    } else {
        sc.iir = rc.filter.iir;
        if (rc.filter.design) {
            const auto target = field("filter.design", [&] {
                return DesignTarget::lowpass(rc.filter.cutoff, rc.filter.delta, rc.filter.points);
            });
            IirDesignOptions o = rc.filter.iir_options;
            o.rho = sc.shift.spectral_radius();
            sc.iir = field("filter.design", [&] { return design_iir(&sc.shift, target, rc.filter.iir, o); }).filter;
        }
    }
    field("scenario", [&] {
        sc.validate();
        return 0;
    });
    return rc;
}

AtcRunConfig parse_atc_config(const Json& root) {
    check_keys(root, "", {"graph", "atc"});
    AtcRunConfig rc;
    rc.raw = root;
    rc.graph = parse_graph(section(root, "graph", ""), "graph");
    const Json& a = section(root, "atc", "");
    check_keys(a, "atc",
               {"L", "M", "eta", "mu", "problem_seed", "variants", "iters", "trials", "seed", "damping", "step",
                "rate", "bits"});
    rc.L = optional<int>(a, "L", "atc", rc.L);
    rc.M = optional<int>(a, "M", "atc", rc.M);
    rc.eta = optional<double>(a, "eta", "atc", rc.eta);
    rc.mu = optional<double>(a, "mu", "atc", rc.mu);
    rc.problem_seed = optional<std::uint64_t>(a, "problem_seed", "atc", rc.problem_seed);
    rc.run = AtcConfig::standard(rc.mu);
    rc.run.iters = optional<int>(a, "iters", "atc", rc.run.iters);
    rc.run.trials = optional<int>(a, "trials", "atc", rc.run.trials);
    rc.run.seed = optional<std::uint64_t>(a, "seed", "atc", rc.run.seed);
    rc.run.def_damping = optional<double>(a, "damping", "atc", rc.run.def_damping);
    rc.run.quant.step_override = optional<double>(a, "step", "atc", rc.run.quant.step_override);
    const auto rate = optional<std::string>(a, "rate", "atc", "variable");
    if (rate == "fixed")
        rc.run.rate = RateModel::fixed(optional<int>(a, "bits", "atc", 8));
    else if (rate != "variable")
        throw ConfigError("atc.rate", "expected variable or fixed");
    const auto names = optional<std::vector<std::string>>(a, "variants", "atc",
                                                          {"uncompressed", "sq", "dq", "def", "qef"});
    for (std::size_t i = 0; i < names.size(); ++i)
        rc.variants.push_back(field("atc.variants[" + std::to_string(i) + "]",
                                    [&] { return atc_variant_from_string(names[i]); }));
    field("atc", [&] {
        rc.run.validate();
        return 0;
    });
    return rc;
}

Json to_json(const FirSpec& f) {
    return {{"type", "fir"}, {"coeffs", std::vector<double>(f.coeffs.data(), f.coeffs.data() + f.coeffs.size())}};
}

Json to_json(const IirSpec& f) {
    Json br = Json::array();
    for (const auto& b : f.branches) br.push_back({b.psi.real(), b.psi.imag(), b.phi.real(), b.phi.imag()});
    return {{"type", "iir"}, {"branches", br}};
}

Json to_json(const FeedbackPlan& plan) {
    Json theta = Json::array();
    for (Eigen::Index i = 0; i < plan.theta.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < plan.theta.cols(); ++k)
            row.push_back({plan.theta(i, k).real(), plan.theta(i, k).imag()});
        theta.push_back(row);
    }
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    Json degenerate = Json::array();
    for (const auto& [i, k] : plan.degenerate) degenerate.push_back({i, k});
    return {{"scenario", to_string(plan.scenario)},
            {"n_nodes", plan.n_nodes},
            {"theta", theta},
            {"predicted_reduction", plan.predicted_reduction},
            {"reduction", vec(plan.reduction)},
            {"zeta", vec(plan.zeta)},
            {"zeta_baseline", vec(plan.zeta_baseline)},
            {"degenerate", degenerate}};
}

CMatrix theta_from_json(const Json& j, Scenario expected, int rows, int cols) {
    if (!j.is_object() || !j.contains("scenario") || !j.contains("theta"))
        throw ConfigError("feedback", "plan file needs scenario and theta");
    if (j.at("scenario").get<std::string>() != to_string(expected))
        throw ConfigError("feedback.scenario", "plan was built for a different scenario");
    const Json& t = j.at("theta");
    if (!t.is_array() || static_cast<int>(t.size()) != rows) throw ConfigError("feedback.theta", "wrong row count");
    CMatrix theta(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (!t[i].is_array() || static_cast<int>(t[i].size()) != cols)
            throw ConfigError("feedback.theta[" + std::to_string(i) + "]", "wrong column count");
        for (int k = 0; k < cols; ++k) {
            const Json& e = t[i][k];
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
                throw ConfigError("feedback.theta[" + std::to_string(i) + "][" + std::to_string(k) + "]",
                                  "expected [re, im]");
            theta(i, k) = cplx(e[0].get<double>(), e[1].get<double>());
        }
    }
    return theta;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace gqef

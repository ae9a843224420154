#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "gqef/config.hpp"

using namespace gqef;

namespace {

template <class F>
std::string failing_field(F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

Json fir_config() {
    return Json::parse(R"({
        "graph": {"type": "ring", "nodes": 8},
        "filter": {"type": "fir", "coeffs": [0.5, 0.3, 0.2]},
        "quantizer": {"bits": 6, "range": 1.0},
        "scenario": {"type": "fir_det", "trials": 10, "iters": 20, "seed": 3}
    })");
}

Json iir_config() {
    return Json::parse(R"({
        "graph": {"type": "path", "nodes": 6},
        "filter": {"type": "iir", "branches": [[0.5, 0.0, 0.8, 0.0], [0.2, 0.3, 0.1, 0.0], [0.2, -0.3, 0.1, 0.0]]},
        "scenario": {"type": "iir_async", "p": 0.7}
    })");
}

} // namespace

TEST_CASE("unknown keys name their full path") {
    Json j = fir_config();
    j["graph"]["colour"] = "red";
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph.colour");
    j = fir_config();
    j["extra"] = 1;
    CHECK(failing_field([&] { parse_run_config(j); }) == "extra");
    j = fir_config();
    j["scenario"]["trails"] = 5;
    CHECK(failing_field([&] { parse_run_config(j); }) == "scenario.trails");
    j = fir_config();
    j["feedback"] = {{"enable", true}};
    CHECK(failing_field([&] { parse_run_config(j); }) == "feedback.enable");
    CHECK(failing_field([] { check_keys(Json::array(), "", {"a"}); }) == "<root>");
}

TEST_CASE("missing and malformed fields") {
    Json j = fir_config();
    j.erase("graph");
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph");
    j = fir_config();
    j["filter"].erase("coeffs");
    CHECK(failing_field([&] { parse_run_config(j); }) == "filter.coeffs");
    j = fir_config();
    j["filter"]["coeffs"] = Json::array();
    CHECK(failing_field([&] { parse_run_config(j); }) == "filter.coeffs");
    j = fir_config();
    j["graph"]["nodes"] = "eight";
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph.nodes");
    j = fir_config();
    j["graph"]["nodes"] = 1;
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph.nodes");
    j = fir_config();
    j["graph"]["type"] = "grid";
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph.type");
    j = fir_config();
    j["graph"]["kind"] = "signless";
    CHECK(failing_field([&] { parse_run_config(j); }) == "graph.kind");
    j = fir_config();
    j["scenario"]["type"] = "iir_det";
    CHECK(failing_field([&] { parse_run_config(j); }) == "filter.type");
    j = fir_config();
    j["scenario"]["type"] = "atc";
    CHECK(failing_field([&] { parse_run_config(j); }).rfind("scenario", 0) == 0);
    j = fir_config();
    j["scenario"]["trials"] = 0;
    CHECK(failing_field([&] { parse_run_config(j); }) == "scenario");
    j = fir_config();
    j["quantizer"]["mode"] = "stochastic";
    CHECK(failing_field([&] { parse_run_config(j); }) == "quantizer.mode");
    j = fir_config();
    j["quantizer"]["bits"] = 0;
    CHECK(failing_field([&] { parse_run_config(j); }) == "quantizer");

    Json i = iir_config();
    i["filter"]["branches"][1] = {0.1, 0.2};
    CHECK(failing_field([&] { parse_run_config(i); }) == "filter.branches[1]");
    i = iir_config();
    i["filter"].erase("branches");
    CHECK(failing_field([&] { parse_run_config(i); }) == "filter.branches");
    i["filter"]["preset"] = "other";
    CHECK(failing_field([&] { parse_run_config(i); }) == "filter.preset");

    Json g = {{"type", "edge_list"}};
    CHECK(failing_field([&] { parse_graph(g); }) == "graph.path");
    CHECK(failing_field([] { load_json("/nonexistent/config.json"); }) == "/nonexistent/config.json");
}

TEST_CASE("well-formed configurations") {
    const RunConfig rc = parse_run_config(fir_config());
    CHECK(rc.scenario.scenario == Scenario::FirDet);
    CHECK(rc.scenario.shift.size() == 8);
    CHECK(rc.scenario.fir.coeffs.size() == 3);
    CHECK(rc.scenario.fir.coeffs[1] == 0.3);
    CHECK(rc.scenario.quant.bits == 6);
    CHECK(rc.scenario.trials == 10);
    CHECK(rc.scenario.seed == 3u);
    CHECK(rc.feedback);
    CHECK(rc.raw == fir_config());

    const RunConfig ri = parse_run_config(iir_config());
    CHECK(ri.scenario.scenario == Scenario::IirAsync);
    CHECK(ri.scenario.p == 0.7);
    REQUIRE(ri.scenario.iir.branches.size() == 3);
    CHECK(ri.scenario.iir.branches[1].psi == cplx(0.2, 0.3));

    Json off = fir_config();
    off["feedback"] = {{"enabled", false}};
    CHECK_FALSE(parse_run_config(off).feedback);

    // Designed FIR filters arrive ready to run.
    Json d = fir_config();
    d["filter"] = {{"type", "fir"}, {"design", {{"order", 4}, {"points", 200}, {"delta", 0.1}}}};
    const RunConfig rd = parse_run_config(d);
    CHECK(rd.filter.design);
    CHECK(rd.scenario.fir.coeffs.size() == 5);

    // Edge-list graphs load from disk.
    const std::string path = "test_config_edges.txt";
    {
        std::ofstream out(path);
        out << "0 1 1\n1 2 1\n2 3 1\n3 0 1\n";
    }
    Json e = fir_config();
    e["graph"] = {{"type", "edge_list"}, {"path", path}, {"nodes", 0}};
    CHECK(parse_run_config(e).scenario.shift.size() == 4);
    std::remove(path.c_str());
}

TEST_CASE("ATC configuration") {
    const Json j = Json::parse(R"({
        "graph": {"type": "sensor", "nodes": 20, "radius": 0.35},
        "atc": {"iters": 50, "trials": 4, "variants": ["sq", "qef"], "rate": "fixed", "bits": 9}
    })");
    const AtcRunConfig rc = parse_atc_config(j);
    CHECK(rc.run.iters == 50);
    CHECK(rc.run.trials == 4);
    REQUIRE(rc.variants.size() == 2);
    CHECK(rc.variants[1] == AtcVariant::Qef);

    Json bad = j;
    bad["atc"]["variants"] = {"sq", "full"};
    CHECK(failing_field([&] { parse_atc_config(bad); }) == "atc.variants[1]");
    bad = j;
    bad["atc"]["rate"] = "entropy";
    CHECK(failing_field([&] { parse_atc_config(bad); }) == "atc.rate");
    bad = j;
    bad["atc"]["damping"] = 0.0;
    CHECK(failing_field([&] { parse_atc_config(bad); }) == "atc");
    bad = j;
    bad["scenario"] = Json::object();
    CHECK(failing_field([&] { parse_atc_config(bad); }) == "scenario");
}

TEST_CASE("plan files") {
    RunConfig rc = parse_run_config(fir_config());
    const FeedbackPlan plan = scenario_plan(rc.scenario);
    const Json j = to_json(plan);
    const CMatrix theta = theta_from_json(Json::parse(j.dump()), Scenario::FirDet, 8, 2);
    CHECK(theta == plan.theta);

    CHECK(failing_field([&] { theta_from_json(j, Scenario::IirDet, 8, 2); }) == "feedback.scenario");
    CHECK(failing_field([&] { theta_from_json(j, Scenario::FirDet, 7, 2); }) == "feedback.theta");
    CHECK(failing_field([&] { theta_from_json(j, Scenario::FirDet, 8, 3); }) == "feedback.theta[0]");
    Json broken = j;
    broken["theta"][2][1] = {1.0};
    CHECK(failing_field([&] { theta_from_json(broken, Scenario::FirDet, 8, 2); }) == "feedback.theta[2][1]");
    CHECK(failing_field([] { theta_from_json(Json::object(), Scenario::FirDet, 1, 1); }) == "feedback");

    const Json fir = to_json(FirSpec{rc.scenario.fir});
    CHECK(fir["coeffs"].size() == 3);
    const IirSpec iir = parse_run_config(iir_config()).scenario.iir;
    const Json ij = to_json(iir);
    REQUIRE(ij["branches"].size() == 3);
    CHECK(ij["branches"][1][1].get<double>() == 0.3);
}

TEST_CASE("number formatting round-trips") {
    Rng rng(9);
    for (int k = 0; k < 2000; ++k) {
        const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform() * 40.0) - 20);
        CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
    }
    for (double v : {0.0, 1.0, -2.5, 1e-300, std::numeric_limits<double>::max(), std::numeric_limits<double>::denorm_min()})
        CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
}

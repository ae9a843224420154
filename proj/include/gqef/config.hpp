#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "gqef/atc.hpp"
#include "gqef/design.hpp"
#include "gqef/filters.hpp"
#include "gqef/graphs.hpp"
#include "gqef/qef.hpp"
#include "gqef/quant.hpp"
#include "gqef/sim.hpp"

namespace gqef {

using Json = nlohmann::json;

/// Throws ConfigError naming the first key of `obj` outside `allowed`.
void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed);

Json load_json(const std::string& path);

struct GraphConfig {
    std::string type = "sensor"; ///< sensor | edge_list | ring | path
    int nodes = 64;
    double radius = 0.2;
    std::uint64_t seed = 1;
    std::string path;
    ShiftKind kind = ShiftKind::NormalizedLaplacian;
};

GraphConfig parse_graph(const Json& j, const std::string& path = "graph");
Graph make_graph(const GraphConfig& g);

struct FilterConfig {
    std::string type = "fir"; ///< fir | iir
    FirSpec fir;
    IirSpec iir;
    bool design = false;
    // FIR design
    int order = 6;
    double delta = 0.03;
    double cutoff = 0.5;
    int points = 1000;
    // IIR design
    std::string preset;
    IirDesignOptions iir_options;
};

FilterConfig parse_filter(const Json& j, const std::string& path = "filter");
QuantizerConfig parse_quantizer(const Json& j, const std::string& path = "quantizer");

/// The full simulate/qef/gramian configuration.
struct RunConfig {
    Json raw;
    GraphConfig graph;
    FilterConfig filter;
    ScenarioConfig scenario;
    bool feedback = true;
};

/// Parses graph/filter/quantizer/scenario/feedback sections. Filters that
/// request a design are designed here so the scenario is ready to run.
RunConfig parse_run_config(const Json& root);

struct AtcRunConfig {
    Json raw;
    GraphConfig graph;
    int L = 40;
    int M = 4;
    double eta = 10.0;
    double mu = 0.01;
    std::uint64_t problem_seed = 1;
    std::vector<AtcVariant> variants;
    AtcConfig run;
};

AtcRunConfig parse_atc_config(const Json& root);

Json to_json(const FirSpec& f);
Json to_json(const IirSpec& f);
Json to_json(const FeedbackPlan& plan);
/// Reads the theta matrix of a plan file; checks scenario and shape.
CMatrix theta_from_json(const Json& j, Scenario expected, int rows, int cols);

/// 17 significant digits, round-trip safe.
std::string format_number(double v);

} // namespace gqef

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/rng.hpp"

namespace gqef {

enum class QuantMode {
    DitheredUniform, ///< subtractive dither: noise exactly U[-step/2, step/2], independent of input
    Probabilistic,   ///< unbiased randomized rounding to the two neighbouring grid points
};

const char* to_string(QuantMode m);
QuantMode quant_mode_from_string(const std::string& s);

struct QuantizerConfig {
    int bits = 8;
    double range = 1.0;
    QuantMode mode = QuantMode::DitheredUniform;
    bool complex_flag = false;
    /// When positive, overrides 2 r / 2^b (variable-rate setups quote the step directly).
    double step_override = 0.0;

    double step() const;
    /// Model noise variance per (possibly complex) component: step^2/12, doubled when complex.
    double noise_variance() const;
    void validate() const;
};

/// Counts clamped inputs. Never silently dropped: simulations report it.
struct OverflowCounter {
    std::uint64_t count = 0;
};

/// Scalar quantizer. Returns the receiver-side reconstruction and writes the
/// integer grid symbol. Inputs beyond +-range are clamped and counted.
double quantize_scalar(double v, const QuantizerConfig& cfg, Rng& rng, std::int64_t* symbol = nullptr,
                       OverflowCounter* overflow = nullptr);

struct Quantized {
    Vector q; ///< reconstruction
    Vector n; ///< realized noise q - v
    std::vector<std::int64_t> symbols;
};

Quantized quantize(const Vector& v, const QuantizerConfig& cfg, Rng& rng, OverflowCounter* overflow = nullptr);

/// Real and imaginary parts are quantized independently.
void quantize_into(const CVector& v, const QuantizerConfig& cfg, Rng& rng, CVector& q, CVector& n,
                   OverflowCounter* overflow = nullptr);
void quantize_into(const Vector& v, const QuantizerConfig& cfg, Rng& rng, Vector& q, Vector& n,
                   OverflowCounter* overflow = nullptr);

/// Bit cost model per transmitted component.
struct RateModel {
    enum class Kind { Fixed, Variable } kind = Kind::Variable;
    int fixed_bits = 8;

    static RateModel fixed(int bits) { return {Kind::Fixed, bits}; }
    static RateModel variable() { return {Kind::Variable, 0}; }

    /// Fixed: fixed_bits. Variable: a zero symbol costs 1 bit; a nonzero one
    /// costs a sign bit plus ceil(log2(|k| + 2)).
    double bits(std::int64_t symbol) const;
};

class RateMeter {
public:
    explicit RateMeter(int components_per_message = 1, RateModel model = RateModel::variable())
        : components_(components_per_message), model_(model) {}

    void record(const std::vector<std::int64_t>& symbols);
    void record_bits(double bits, std::uint64_t messages = 1);
    void merge(const RateMeter& other);
    void reset();

    double total_bits() const noexcept { return total_bits_; }
    std::uint64_t messages() const noexcept { return messages_; }
    int components_per_message() const noexcept { return components_; }
    const RateModel& model() const noexcept { return model_; }

private:
    double total_bits_ = 0.0;
    std::uint64_t messages_ = 0;
    int components_;
    RateModel model_;
};

/// Average bits per message per component. Throws InvalidInput on an empty meter.
double rate_report(const RateMeter& meter);

struct DifferentialResult {
    Vector reconstructed; ///< prev + Q[v - prev]
    Vector noise;         ///< reconstructed - v
    std::vector<std::int64_t> symbols;
    double bits = 0.0;
};

DifferentialResult quantize_differential(const Vector& v, const Vector& prev, const QuantizerConfig& cfg, Rng& rng,
                                         const RateModel& rate = RateModel::variable(),
                                         OverflowCounter* overflow = nullptr);

} // namespace gqef

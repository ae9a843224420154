#include "gqef/quant.hpp"

#include <cmath>

namespace gqef {

const char* to_string(QuantMode m) {
    return m == QuantMode::DitheredUniform ? "dithered" : "probabilistic";
}

QuantMode quant_mode_from_string(const std::string& s) {
    if (s == "dithered" || s == "dithered_uniform") return QuantMode::DitheredUniform;
    if (s == "probabilistic") return QuantMode::Probabilistic;
    throw InvalidInput("unknown quantizer mode: " + s);
}

double QuantizerConfig::step() const {
    if (step_override > 0.0) return step_override;
    return 2.0 * range / std::ldexp(1.0, bits);
}

double QuantizerConfig::noise_variance() const {
    const double d = step();
    return d * d / 12.0 * (complex_flag ? 2.0 : 1.0);
}

void QuantizerConfig::validate() const {
    if (step_override > 0.0) {
        if (!std::isfinite(step_override)) throw InvalidInput("quantizer step must be finite");
    } else if (bits < 1 || bits > 62) {
        throw InvalidInput("quantizer bits must be in [1, 62]");
    }
    if (!(range > 0.0)) throw InvalidInput("quantizer range must be positive");
}

double quantize_scalar(double v, const QuantizerConfig& cfg, Rng& rng, std::int64_t* symbol,
                       OverflowCounter* overflow) {
    const double r = cfg.range;
    if (v > r || v < -r) {
        if (overflow) ++overflow->count;
        v = v > r ? r : -r;
    }
    const double d = cfg.step();
    double k;
    double q;
    if (cfg.mode == QuantMode::DitheredUniform) {
        const double dither = (rng.uniform() - 0.5) * d;
        k = std::nearbyint((v + dither) / d);
        q = k * d - dither;
    } else {
        const double s = v / d;
        const double lo = std::floor(s);
        const double frac = s - lo;
        k = lo + (rng.uniform() < frac ? 1.0 : 0.0);
        q = k * d;
    }
    if (symbol) *symbol = static_cast<std::int64_t>(k);
    return q;
}

Quantized quantize(const Vector& v, const QuantizerConfig& cfg, Rng& rng, OverflowCounter* overflow) {
    Quantized out;
    out.q.resize(v.size());
    out.symbols.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out.q[i] = quantize_scalar(v[i], cfg, rng, &out.symbols[i], overflow);
    out.n = out.q - v;
    return out;
}

void quantize_into(const Vector& v, const QuantizerConfig& cfg, Rng& rng, Vector& q, Vector& n,
                   OverflowCounter* overflow) {
    q.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) q[i] = quantize_scalar(v[i], cfg, rng, nullptr, overflow);
    n = q - v;
}

void quantize_into(const CVector& v, const QuantizerConfig& cfg, Rng& rng, CVector& q, CVector& n,
                   OverflowCounter* overflow) {
    q.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double re = quantize_scalar(v[i].real(), cfg, rng, nullptr, overflow);
        const double im = quantize_scalar(v[i].imag(), cfg, rng, nullptr, overflow);
        q[i] = cplx(re, im);
    }
    n = q - v;
}

double RateModel::bits(std::int64_t symbol) const {
    if (kind == Kind::Fixed) return fixed_bits;
    if (symbol == 0) return 1.0;
    const double mag = static_cast<double>(symbol < 0 ? -symbol : symbol);
    return 1.0 + std::ceil(std::log2(mag + 2.0));
}

void RateMeter::record(const std::vector<std::int64_t>& symbols) {
    if (symbols.size() % static_cast<std::size_t>(components_) != 0)
        throw InvalidInput("rate meter: symbol count is not a multiple of the message size");
    for (auto s : symbols) total_bits_ += model_.bits(s);
    messages_ += symbols.size() / components_;
}

void RateMeter::record_bits(double bits, std::uint64_t messages) {
    total_bits_ += bits;
    messages_ += messages;
}

void RateMeter::merge(const RateMeter& other) {
    total_bits_ += other.total_bits_;
    messages_ += other.messages_;
}

void RateMeter::reset() {
    total_bits_ = 0.0;
    messages_ = 0;
}

double rate_report(const RateMeter& meter) {
    if (meter.messages() == 0) throw InvalidInput("rate undefined: no messages recorded");
    return meter.total_bits() / (static_cast<double>(meter.messages()) * meter.components_per_message());
}

DifferentialResult quantize_differential(const Vector& v, const Vector& prev, const QuantizerConfig& cfg, Rng& rng,
                                         const RateModel& rate, OverflowCounter* overflow) {
    if (v.size() != prev.size()) throw InvalidInput("quantize_differential: dimension mismatch");
    DifferentialResult out;
    out.reconstructed.resize(v.size());
    out.symbols.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double innovation = v[i] - prev[i];
        out.reconstructed[i] = prev[i] + quantize_scalar(innovation, cfg, rng, &out.symbols[i], overflow);
        out.bits += rate.bits(out.symbols[i]);
    }
    out.noise = out.reconstructed - v;
    return out;
}

} // namespace gqef

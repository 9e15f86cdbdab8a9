#pragma once

// Square-QAM constellations and the OFDM transform pair restricted to the
// occupied subcarriers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hoc {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;
using bitvec = std::vector<std::uint8_t>;
using Rng = std::mt19937_64;

struct OfdmConfig {
    int n_fft = 64;
    int n_cp = 16;
    std::vector<int> used_indices;
    int mod_order = 64;

    std::size_t n_used() const { return used_indices.size(); }
    int bits_per_symbol() const { return static_cast<int>(std::lround(std::log2(mod_order))); }
    std::size_t bits_per_frame() const { return n_used() * static_cast<std::size_t>(bits_per_symbol()); }

    void validate() const {
        if (n_fft <= 0) throw std::invalid_argument("OfdmConfig: n_fft must be positive");
        if (n_cp < 0 || n_cp >= n_fft) throw std::invalid_argument("OfdmConfig: n_cp must be in [0, n_fft)");
        if (used_indices.empty()) throw std::invalid_argument("OfdmConfig: no used subcarriers");
        if (used_indices.size() > static_cast<std::size_t>(n_fft))
            throw std::invalid_argument("OfdmConfig: more used subcarriers than FFT bins");
        for (std::size_t i = 0; i < used_indices.size(); ++i) {
            const int idx = used_indices[i];
            if (idx < -n_fft / 2 || idx > n_fft / 2 - 1)
                throw std::invalid_argument("OfdmConfig: subcarrier index " + std::to_string(idx) + " out of range");
            if (i > 0 && used_indices[i - 1] >= idx)
                throw std::invalid_argument("OfdmConfig: used_indices must be strictly ascending");
        }
        if (mod_order != 4 && mod_order != 16 && mod_order != 64)
            throw std::invalid_argument("OfdmConfig: mod_order must be 4, 16 or 64");
    }
};

/// Config with `n_used` adjacent subcarriers starting at `first_index`.
inline OfdmConfig contiguous_config(int n_fft, int n_cp, int n_used, int first_index, int mod_order) {
    OfdmConfig cfg{n_fft, n_cp, {}, mod_order};
    for (int i = 0; i < n_used; ++i) cfg.used_indices.push_back(first_index + i);
    cfg.validate();
    return cfg;
}

/// Expected per-sample power of the modulator output for unit-energy symbols.
inline double analytic_power(const OfdmConfig& cfg) {
    return static_cast<double>(cfg.n_used()) / cfg.n_fft;
}

/// Gray-coded square QAM with unit average energy.
///
/// A symbol's bits are split in two halves, the first selecting the in-phase
/// level and the second the quadrature level, MSB first. Along each axis the
/// Gray index g (binary value of the Gray-decoded bits) maps to the level
/// (side - 1) - 2g, so for QPSK bit 0 is +1 and 00 maps to (1 + j)/sqrt(2).
/// For 16-QAM the axis table is 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3.
/// Levels are divided by sqrt(2(M - 1)/3).
class QamConstellation {
public:
    explicit QamConstellation(int order) : order_(order) {
        if (order != 4 && order != 16 && order != 64)
            throw std::invalid_argument("QamConstellation: unsupported order " + std::to_string(order));
        bits_ = static_cast<int>(std::lround(std::log2(order)));
        axis_bits_ = bits_ / 2;
        side_ = 1 << axis_bits_;
        scale_ = std::sqrt(2.0 * (order - 1) / 3.0);
    }

    int order() const { return order_; }
    int bits_per_symbol() const { return bits_; }
    double scale() const { return scale_; }

    cplx map_one(std::span<const std::uint8_t> bits) const {
        const int gi = gray_decode(bits.subspan(0, axis_bits_));
        const int gq = gray_decode(bits.subspan(axis_bits_, axis_bits_));
        return {level(gi) / scale_, level(gq) / scale_};
    }

    void demap_one(cplx s, std::span<std::uint8_t> out) const {
        gray_encode(decide(s.real()), out.subspan(0, axis_bits_));
        gray_encode(decide(s.imag()), out.subspan(axis_bits_, axis_bits_));
    }

    cplx nearest(cplx s) const { return {level(decide(s.real())) / scale_, level(decide(s.imag())) / scale_}; }

    cvec map(std::span<const std::uint8_t> bits) const {
        if (bits.size() % static_cast<std::size_t>(bits_) != 0)
            throw std::invalid_argument("map_bits: bit count not a multiple of log2(M)");
        cvec out(bits.size() / bits_);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = map_one(bits.subspan(i * bits_, bits_));
        return out;
    }

    bitvec demap(std::span<const cplx> symbols) const {
        bitvec out(symbols.size() * bits_);
        for (std::size_t i = 0; i < symbols.size(); ++i)
            demap_one(symbols[i], std::span(out).subspan(i * bits_, bits_));
        return out;
    }

    /// All M points, indexed by the integer whose MSB-first bits map to them.
    cvec points() const {
        cvec pts(order_);
        bitvec b(bits_);
        for (int v = 0; v < order_; ++v) {
            for (int i = 0; i < bits_; ++i) b[i] = static_cast<std::uint8_t>((v >> (bits_ - 1 - i)) & 1);
            pts[v] = map_one(b);
        }
        return pts;
    }

private:
    double level(int g) const { return static_cast<double>((side_ - 1) - 2 * g); }

    // Nearest Gray index along one axis. Exact midpoints (to 1e-9 of the level
    // spacing) resolve toward the smaller level, i.e. the larger index.
    int decide(double v) const {
        const double t = ((side_ - 1) - v * scale_) / 2.0;
        const double fl = std::floor(t);
        int g = static_cast<int>(fl);
        const double frac = t - fl;
        if (frac > 0.5 - 1e-9) ++g;
        return std::clamp(g, 0, side_ - 1);
    }

    static int gray_decode(std::span<const std::uint8_t> bits) {
        int gray = 0;
        for (auto b : bits) gray = (gray << 1) | (b & 1);
        int bin = gray;
        for (int shift = gray >> 1; shift != 0; shift >>= 1) bin ^= shift;
        return bin;
    }

    static void gray_encode(int g, std::span<std::uint8_t> out) {
        const int gray = g ^ (g >> 1);
        const int n = static_cast<int>(out.size());
        for (int i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>((gray >> (n - 1 - i)) & 1);
    }

    int order_;
    int bits_;
    int axis_bits_;
    int side_;
    double scale_;
};

inline cvec map_bits(std::span<const std::uint8_t> bits, int mod_order) {
    return QamConstellation(mod_order).map(bits);
}

inline bitvec demap_hard(std::span<const cplx> symbols, int mod_order) {
    return QamConstellation(mod_order).demap(symbols);
}

struct SymbolFrame {
    cvec data;
    bitvec bits;
};

inline SymbolFrame random_frame(const QamConstellation& qam, std::size_t n_used, Rng& rng) {
    SymbolFrame f;
    f.bits.resize(n_used * qam.bits_per_symbol());
    std::uniform_int_distribution<int> coin(0, 1);
    for (auto& b : f.bits) b = static_cast<std::uint8_t>(coin(rng));
    f.data = qam.map(f.bits);
    return f;
}

/// One OFDM symbol in time: `n_cp` prefix samples followed by the body.
struct TimeSignal {
    cvec samples;
    int n_cp = 0;

    std::span<const cplx> body() const { return std::span(samples).subspan(n_cp); }
};

/// Mean |x_n|^2 over the body (prefix excluded).
inline double measure_power(const TimeSignal& signal) {
    const auto body = signal.body();
    if (body.empty()) throw std::invalid_argument("measure_power: empty signal");
    double acc = 0.0;
    for (const auto& v : body) acc += std::norm(v);
    return acc / static_cast<double>(body.size());
}

/// IDFT/DFT restricted to the occupied subcarriers, with a precomputed
/// root-of-unity table. Direct summation costs N * N_U per symbol, which is
/// below a full FFT for the handful of subcarriers this library targets.
class OfdmModem {
public:
    explicit OfdmModem(OfdmConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const int n = cfg_.n_fft;
        roots_.resize(n);
        for (int i = 0; i < n; ++i) {
            const double ph = 2.0 * std::numbers::pi * i / n;
            roots_[i] = {std::cos(ph), std::sin(ph)};
        }
        norm_ = 1.0 / std::sqrt(static_cast<double>(n));
    }

    const OfdmConfig& config() const { return cfg_; }

    TimeSignal modulate(std::span<const cplx> data) const {
        if (data.size() != cfg_.n_used())
            throw std::invalid_argument("ofdm_modulate: frame has " + std::to_string(data.size()) +
                                        " symbols, expected " + std::to_string(cfg_.n_used()));
        const int n = cfg_.n_fft;
        const int cp = cfg_.n_cp;
        TimeSignal out{cvec(static_cast<std::size_t>(cp + n)), cp};
        for (int t = 0; t < n; ++t) {
            cplx acc{};
            for (std::size_t k = 0; k < data.size(); ++k) acc += data[k] * roots_[phase_index(t, cfg_.used_indices[k])];
            out.samples[cp + t] = acc * norm_;
        }
        std::copy(out.samples.end() - cp, out.samples.end(), out.samples.begin());
        return out;
    }

    cvec demodulate(const TimeSignal& signal) const {
        const int n = cfg_.n_fft;
        if (signal.samples.size() < static_cast<std::size_t>(signal.n_cp + n))
            throw std::invalid_argument("ofdm_demodulate: signal shorter than prefix + N");
        const auto body = std::span(signal.samples).subspan(signal.n_cp, n);
        cvec out(cfg_.n_used());
        for (std::size_t k = 0; k < out.size(); ++k) {
            cplx acc{};
            for (int t = 0; t < n; ++t) acc += body[t] * std::conj(roots_[phase_index(t, cfg_.used_indices[k])]);
            out[k] = acc * norm_;
        }
        return out;
    }

private:
    std::size_t phase_index(int t, int idx) const {
        const int n = cfg_.n_fft;
        const long long p = (static_cast<long long>(t) * idx) % n;
        return static_cast<std::size_t>(p < 0 ? p + n : p);
    }

    OfdmConfig cfg_;
    cvec roots_;
    double norm_;
};

inline TimeSignal ofdm_modulate(const SymbolFrame& frame, const OfdmConfig& cfg) {
    return OfdmModem(cfg).modulate(frame.data);
}

inline cvec ofdm_demodulate(const TimeSignal& signal, const OfdmConfig& cfg) {
    return OfdmModem(cfg).demodulate(signal);
}

}  // namespace hoc

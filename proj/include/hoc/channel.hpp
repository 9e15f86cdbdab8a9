#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hoc/ofdm.hpp"

namespace hoc {

/// Per-subcarrier complex gains of one fading instance plus the per-subcarrier
/// noise variance. Gains stay fixed for every frame sent through the instance.
struct ChannelRealization {
    cvec gains;
    double noise_var = 0.0;
};

struct ImpulseResponse {
    cvec taps;
};

inline cplx complex_normal(Rng& rng, double variance) {
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    const double re = nd(rng);
    const double im = nd(rng);
    return {re, im};
}

/// i.i.d. unit-power Rayleigh gains.
inline cvec draw_rayleigh(std::size_t n_used, Rng& rng) {
    if (n_used == 0) throw std::invalid_argument("draw_rayleigh: n_used must be >= 1");
    cvec h(n_used);
    for (auto& v : h) v = complex_normal(rng, 1.0);
    return h;
}

/// Noise variance per subcarrier for a target Eb/N0, given the mean PA-output
/// power per used subcarrier (distortion included).
inline double calibrate_noise(double ebn0_db, double signal_power_per_used_sc, int mod_order) {
    if (!(signal_power_per_used_sc > 0.0)) throw std::invalid_argument("calibrate_noise: signal power must be positive");
    if (mod_order != 4 && mod_order != 16 && mod_order != 64)
        throw std::invalid_argument("calibrate_noise: unsupported modulation order");
    const double bits = std::log2(static_cast<double>(mod_order));
    return signal_power_per_used_sc / (bits * std::pow(10.0, ebn0_db / 10.0));
}

/// r_k = h_k Y_k + w_k.
inline cvec apply_freq_channel(std::span<const cplx> y, const ChannelRealization& ch, Rng& rng) {
    if (y.size() != ch.gains.size()) throw std::invalid_argument("apply_freq_channel: size mismatch");
    cvec r(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        r[k] = ch.gains[k] * y[k];
        if (ch.noise_var > 0.0) r[k] += complex_normal(rng, ch.noise_var);
    }
    return r;
}

/// Linear convolution of a single CP-prefixed symbol with the taps, output
/// truncated to the input frame. The prefix absorbs the spill of earlier
/// samples, so the body sees a circular convolution.
inline TimeSignal apply_time_channel(const TimeSignal& y, const ImpulseResponse& h) {
    if (h.taps.empty()) throw std::invalid_argument("apply_time_channel: empty impulse response");
    if (h.taps.size() > static_cast<std::size_t>(y.n_cp) + 1)
        throw std::invalid_argument("apply_time_channel: impulse response longer than cyclic prefix + 1");
    TimeSignal r{cvec(y.samples.size()), y.n_cp};
    for (std::size_t n = 0; n < r.samples.size(); ++n) {
        cplx acc{};
        for (std::size_t l = 0; l < h.taps.size() && l <= n; ++l) acc += h.taps[l] * y.samples[n - l];
        r.samples[n] = acc;
    }
    return r;
}

/// H_k = sum_l h_l exp(-j 2 pi l I_k / N) at the occupied subcarriers.
inline cvec tap_response(const ImpulseResponse& h, const OfdmConfig& cfg) {
    cvec out(cfg.n_used());
    for (std::size_t k = 0; k < out.size(); ++k) {
        cplx acc{};
        for (std::size_t l = 0; l < h.taps.size(); ++l) {
            const double ph = -2.0 * std::numbers::pi * static_cast<double>(l) * cfg.used_indices[k] / cfg.n_fft;
            acc += h.taps[l] * cplx{std::cos(ph), std::sin(ph)};
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace hoc

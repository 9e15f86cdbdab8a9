#pragma once

// Transmitter chain: modulator, back-off scaling and PA, observed at the
// occupied subcarriers of the PA output.

#include <stdexcept>

#include "hoc/ofdm.hpp"
#include "hoc/pa.hpp"

namespace hoc {

/// PA model driven at a given input back-off.
///
/// Saturating models scale the modulator output by `input_scale` (fixed
/// P_max); polynomial models have no saturation point and run at scale 1.
/// `bussgang` is the PA's gain at its actual input power, so the end-to-end
/// linear gain from d_k to the PA-output subcarrier is bussgang.alpha * input_scale.
struct OperatingPoint {
    PaModel pa;
    double ibo_db = 0.0;
    double input_scale = 1.0;
    BussgangGain bussgang;

    cplx effective_gain() const { return bussgang.alpha * input_scale; }
};

inline OperatingPoint make_operating_point(const PaModel& pa, const OfdmConfig& cfg, double ibo_db,
                                           std::size_t alpha_samples, std::uint64_t alpha_seed) {
    validate(pa);
    OperatingPoint op{pa, ibo_db, 1.0, {}};
    const double sigma2 = analytic_power(cfg);
    if (const auto pmax = saturation_power(pa)) op.input_scale = gain_for_ibo(ibo_db, *pmax, sigma2);
    op.bussgang = estimate_alpha(pa, op.input_scale * op.input_scale * sigma2, alpha_samples, alpha_seed);
    return op;
}

class Transmitter {
public:
    Transmitter(OfdmConfig cfg, OperatingPoint op) : modem_(std::move(cfg)), qam_(modem_.config().mod_order), op_(std::move(op)) {}

    const OfdmModem& modem() const { return modem_; }
    const OfdmConfig& config() const { return modem_.config(); }
    const QamConstellation& qam() const { return qam_; }
    const OperatingPoint& operating_point() const { return op_; }

    /// Scaled modulator output (PA input).
    TimeSignal pa_input(std::span<const cplx> data) const {
        TimeSignal x = modem_.modulate(data);
        for (auto& v : x.samples) v *= op_.input_scale;
        return x;
    }

    TimeSignal pa_output(std::span<const cplx> data) const {
        TimeSignal y = pa_input(data);
        for (auto& v : y.samples) v = amplify(op_.pa, v);
        return y;
    }

    /// PA output observed at the occupied subcarriers (no channel, no noise).
    cvec transmit(std::span<const cplx> data) const { return modem_.demodulate(pa_output(data)); }

private:
    OfdmModem modem_;
    QamConstellation qam_;
    OperatingPoint op_;
};

/// Bussgang gain measured on actual OFDM frames instead of Gaussian samples.
inline BussgangGain estimate_alpha_frames(const Transmitter& tx, std::size_t n_frames, std::uint64_t seed) {
    if (n_frames == 0) throw std::invalid_argument("estimate_alpha_frames: no frames");
    Rng rng(seed);
    cplx num{};
    double den = 0.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        const auto frame = random_frame(tx.qam(), tx.config().n_used(), rng);
        const auto x = tx.pa_input(frame.data);
        const auto xb = x.body();
        for (const auto& v : xb) {
            num += amplify(tx.operating_point().pa, v) * std::conj(v);
            den += std::norm(v);
        }
    }
    const double n = static_cast<double>(n_frames * static_cast<std::size_t>(tx.config().n_fft));
    return {num / den, den / n, 0.0};
}

}  // namespace hoc

#pragma once

// Memoryless power-amplifier models, input back-off control and the
// Bussgang gain of a nonlinearity driven by a complex Gaussian input.

#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

#include "hoc/ofdm.hpp"

namespace hoc {

struct RappParams {
    double gain = 1.0;
    double p_max = 1.0;
    double smoothness = 10.0;

    void validate() const {
        if (!(gain > 0.0)) throw std::invalid_argument("RappParams: gain must be positive");
        if (!(p_max > 0.0)) throw std::invalid_argument("RappParams: p_max must be positive");
        if (!(smoothness >= 0.5)) throw std::invalid_argument("RappParams: smoothness must be >= 0.5");
    }
};

struct SoftLimiterParams {
    double gain = 1.0;
    double p_max = 1.0;

    void validate() const {
        if (!(gain > 0.0)) throw std::invalid_argument("SoftLimiterParams: gain must be positive");
        if (!(p_max > 0.0)) throw std::invalid_argument("SoftLimiterParams: p_max must be positive");
    }
};

/// coeffs[q] multiplies x |x|^(2q), i.e. the monomial of order 2q + 1.
struct PolynomialParams {
    cvec coeffs{cplx{1.0, 0.0}};

    void validate() const {
        if (coeffs.empty()) throw std::invalid_argument("PolynomialParams: no coefficients");
    }
};

using PaModel = std::variant<RappParams, SoftLimiterParams, PolynomialParams>;

namespace detail {

// u^p, by repeated squaring when p is a small integer.
inline double smooth_power(double u, double p) {
    if (p == std::floor(p) && p <= 64.0) {
        auto n = static_cast<unsigned>(p);
        double r = 1.0;
        while (n) {
            if (n & 1u) r *= u;
            u *= u;
            n >>= 1;
        }
        return r;
    }
    return std::pow(u, p);
}

}  // namespace detail

inline cplx rapp_amplify(cplx x, const RappParams& pa) {
    const cplx gx = pa.gain * x;
    const double u = std::norm(gx) / pa.p_max;
    if (u == 0.0) return gx;
    const double p = pa.smoothness;
    // (1 + u^p)^(1/2p), rewritten for u > 1 so large p cannot overflow.
    const double denom = u <= 1.0 ? std::pow(1.0 + detail::smooth_power(u, p), 0.5 / p)
                                  : std::sqrt(u) * std::pow(1.0 + detail::smooth_power(1.0 / u, p), 0.5 / p);
    return gx / denom;
}

inline cplx soft_limit(cplx x, double gain, double p_max) {
    const cplx gx = gain * x;
    const double pw = std::norm(gx);
    if (pw <= p_max) return gx;
    return gx * std::sqrt(p_max / pw);
}

inline cplx poly_amplify(cplx x, const PolynomialParams& pa) {
    const double mag2 = std::norm(x);
    cplx acc{};
    double w = 1.0;
    for (const auto& a : pa.coeffs) {
        acc += a * w;
        w *= mag2;
    }
    return acc * x;
}

inline cplx amplify(const PaModel& model, cplx x) {
    return std::visit(
        [x](const auto& pa) -> cplx {
            using T = std::decay_t<decltype(pa)>;
            if constexpr (std::is_same_v<T, RappParams>) return rapp_amplify(x, pa);
            else if constexpr (std::is_same_v<T, SoftLimiterParams>) return soft_limit(x, pa.gain, pa.p_max);
            else return poly_amplify(x, pa);
        },
        model);
}

inline void validate(const PaModel& model) {
    std::visit([](const auto& pa) { pa.validate(); }, model);
}

/// Saturation power of models that have one; polynomial models do not.
inline std::optional<double> saturation_power(const PaModel& model) {
    if (const auto* r = std::get_if<RappParams>(&model)) return r->p_max;
    if (const auto* s = std::get_if<SoftLimiterParams>(&model)) return s->p_max;
    return std::nullopt;
}

inline double linear_gain(const PaModel& model) {
    if (const auto* r = std::get_if<RappParams>(&model)) return r->gain;
    if (const auto* s = std::get_if<SoftLimiterParams>(&model)) return s->gain;
    return std::abs(std::get<PolynomialParams>(model).coeffs.front());
}

inline std::string describe(const PaModel& model) {
    std::ostringstream os;
    os.precision(17);
    if (const auto* r = std::get_if<RappParams>(&model)) {
        os << "rapp(gain=" << r->gain << ",p_max=" << r->p_max << ",p=" << r->smoothness << ")";
    } else if (const auto* s = std::get_if<SoftLimiterParams>(&model)) {
        os << "soft_limiter(gain=" << s->gain << ",p_max=" << s->p_max << ")";
    } else {
        os << "polynomial(";
        const auto& c = std::get<PolynomialParams>(model).coeffs;
        for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[i].real() << "+" << c[i].imag() << "j";
        os << ")";
    }
    return os.str();
}

/// Amplitude scale s for the PA input so that P_max / (s^2 sigma2) equals
/// the requested back-off.
inline double gain_for_ibo(double ibo_db, double p_max, double sigma2) {
    if (!(p_max > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("gain_for_ibo: p_max and sigma2 must be positive");
    const double gamma = std::pow(10.0, ibo_db / 10.0);
    return std::sqrt(p_max / (gamma * sigma2));
}

struct BussgangGain {
    cplx alpha{1.0, 0.0};
    double input_power = 0.0;
    double std_error = 0.0;
};

/// Ratio estimate sum(y x*) / sum(|x|^2) over circular Gaussian inputs of
/// variance `sigma2`.
inline BussgangGain estimate_alpha(const PaModel& model, double sigma2, std::size_t n_samples, std::uint64_t seed) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("estimate_alpha: sigma2 must be positive");
    if (n_samples < 10000) throw std::invalid_argument("estimate_alpha: need at least 1e4 samples");
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, std::sqrt(sigma2 / 2.0));
    std::vector<cplx> cross(n_samples);
    std::vector<double> pw(n_samples);
    cplx num{};
    double den = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const cplx x{nd(rng), nd(rng)};
        cross[i] = amplify(model, x) * std::conj(x);
        pw[i] = std::norm(x);
        num += cross[i];
        den += pw[i];
    }
    const cplx alpha = num / den;
    double resid = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) resid += std::norm(cross[i] - alpha * pw[i]);
    return {alpha, sigma2, std::sqrt(resid) / den};
}

/// q_n = y_n - alpha x_n.
inline TimeSignal bussgang_residual(const TimeSignal& x, const TimeSignal& y, cplx alpha) {
    if (x.samples.size() != y.samples.size()) throw std::invalid_argument("bussgang_residual: length mismatch");
    TimeSignal q{cvec(x.samples.size()), y.n_cp};
    for (std::size_t i = 0; i < q.samples.size(); ++i) q.samples[i] = y.samples[i] - alpha * x.samples[i];
    return q;
}

}  // namespace hoc

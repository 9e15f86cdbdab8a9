#pragma once

// Detection schemes: zero forcing, clipping-noise cancellation and the learned
// higher-order combiners (channel-aware and PA-only).

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hoc/channel.hpp"
#include "hoc/imd.hpp"
#include "hoc/link.hpp"
#include "hoc/lstsq.hpp"

namespace hoc {

/// Channel gains below this magnitude are not divided by.
inline constexpr double kZeroGainThreshold = 1e-6;

struct DetectionResult {
    std::vector<cvec> symbols;
    bitvec bits;
    std::vector<double> sq_error;
    std::size_t zero_gain_events = 0;
};

inline std::size_t count_bit_errors(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("count_bit_errors: length mismatch");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] != b[i]);
    return n;
}

/// Fills per-frame squared symbol error against the transmitted symbols.
inline void score(DetectionResult& res, std::span<const cvec> truth) {
    if (truth.size() != res.symbols.size()) throw std::invalid_argument("score: frame count mismatch");
    res.sq_error.assign(truth.size(), 0.0);
    for (std::size_t f = 0; f < truth.size(); ++f)
        for (std::size_t k = 0; k < truth[f].size(); ++k) res.sq_error[f] += std::norm(res.symbols[f][k] - truth[f][k]);
}

inline double mean_sq_error(std::span<const cvec> est, std::span<const cvec> truth) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < truth.size(); ++f)
        for (std::size_t k = 0; k < truth[f].size(); ++k, ++n) acc += std::norm(est[f][k] - truth[f][k]);
    return n ? acc / static_cast<double>(n) : 0.0;
}

namespace detail {

inline void hard_decide(DetectionResult& res, const QamConstellation& qam) {
    const std::size_t bps = static_cast<std::size_t>(qam.bits_per_symbol());
    const std::size_t n_used = res.symbols.empty() ? 0 : res.symbols.front().size();
    res.bits.resize(res.symbols.size() * n_used * bps);
    for (std::size_t f = 0; f < res.symbols.size(); ++f)
        for (std::size_t k = 0; k < n_used; ++k)
            qam.demap_one(res.symbols[f][k], std::span(res.bits).subspan((f * n_used + k) * bps, bps));
}

inline std::size_t zero_gain_count(const cvec& gains) {
    return static_cast<std::size_t>(
        std::count_if(gains.begin(), gains.end(), [](cplx h) { return std::abs(h) < kZeroGainThreshold; }));
}

// r_k / h_k, or r_k itself on a vanishing gain.
inline cvec equalize(std::span<const cplx> r, const cvec& gains) {
    cvec out(r.size());
    for (std::size_t k = 0; k < r.size(); ++k)
        out[k] = std::abs(gains[k]) < kZeroGainThreshold ? r[k] : r[k] / gains[k];
    return out;
}

}  // namespace detail

/// d_k = r_k / (h_k alpha). Subcarriers with a vanishing gain are decided
/// on the unscaled r_k and counted in `zero_gain_events`.
inline DetectionResult zf_detect(std::span<const cvec> received, const ChannelRealization& ch, cplx alpha,
                                 const QamConstellation& qam) {
    if (std::abs(alpha) == 0.0) throw std::invalid_argument("zf_detect: zero Bussgang gain");
    DetectionResult res;
    res.zero_gain_events = detail::zero_gain_count(ch.gains);
    res.symbols.reserve(received.size());
    for (const auto& r : received) {
        if (r.size() != ch.gains.size()) throw std::invalid_argument("zf_detect: frame size does not match channel");
        cvec d = detail::equalize(r, ch.gains);
        for (std::size_t k = 0; k < d.size(); ++k)
            if (std::abs(ch.gains[k]) >= kZeroGainThreshold) d[k] /= alpha;
        res.symbols.push_back(std::move(d));
    }
    detail::hard_decide(res, qam);
    return res;
}

/// Decision-aided clipping-noise cancellation. Each iteration slices the
/// current estimate, regenerates the PA output of the sliced frame through
/// the transmitter twin, takes its in-band distortion q = Y - alpha d and
/// re-estimates d = (r / h - q) / alpha. Zero iterations is plain ZF.
inline DetectionResult cnc_detect(std::span<const cvec> received, const ChannelRealization& ch, const Transmitter& tx,
                                  int iterations) {
    if (iterations < 0) throw std::invalid_argument("cnc_detect: negative iteration count");
    const cplx alpha = tx.operating_point().effective_gain();
    DetectionResult res = zf_detect(received, ch, alpha, tx.qam());
    if (iterations == 0) return res;
    const auto& qam = tx.qam();
    const std::size_t n = ch.gains.size();
    std::vector<bool> usable(n);
    for (std::size_t k = 0; k < n; ++k) usable[k] = std::abs(ch.gains[k]) >= kZeroGainThreshold;

    cvec sliced(n), previous(n);
    for (std::size_t f = 0; f < received.size(); ++f) {
        const cvec eq = detail::equalize(received[f], ch.gains);
        auto& d = res.symbols[f];
        for (int it = 0; it < iterations; ++it) {
            for (std::size_t k = 0; k < n; ++k) sliced[k] = qam.nearest(d[k]);
            // same decisions reproduce the same estimate: fixed point reached
            if (it > 0 && sliced == previous) break;
            const cvec regen = tx.transmit(sliced);
            for (std::size_t k = 0; k < n; ++k)
                if (usable[k]) d[k] = (eq[k] - (regen[k] - alpha * sliced[k])) / alpha;
            previous = sliced;
        }
    }
    detail::hard_decide(res, qam);
    return res;
}

enum class CombinerKind { imd3, imd5, full3 };

inline std::string to_string(CombinerKind k) {
    switch (k) {
        case CombinerKind::imd3: return "imd3";
        case CombinerKind::imd5: return "imd5";
        case CombinerKind::full3: return "full3";
    }
    return "?";
}

inline CombinerKind combiner_kind_from_string(const std::string& s) {
    if (s == "imd3") return CombinerKind::imd3;
    if (s == "imd5") return CombinerKind::imd5;
    if (s == "full3") return CombinerKind::full3;
    throw std::invalid_argument("unknown combiner kind '" + s + "'");
}

/// Ordered monomials for every target position.
inline std::vector<std::vector<Monomial>> combiner_terms(const std::vector<int>& indices, CombinerKind kind) {
    std::vector<std::vector<Monomial>> out;
    for (int k = 0; k < static_cast<int>(indices.size()); ++k) {
        switch (kind) {
            case CombinerKind::imd3: out.push_back(make_term_set(indices, k, 3).monomials()); break;
            case CombinerKind::imd5: out.push_back(make_term_set(indices, k, 5).monomials()); break;
            case CombinerKind::full3: out.push_back(enum_full3(indices, k).monomials()); break;
        }
    }
    return out;
}

enum class Provenance { trained_with_channel, trained_pa_only };

inline std::string to_string(Provenance p) {
    return p == Provenance::trained_with_channel ? "trained_with_channel" : "trained_pa_only";
}

struct TrainingInfo {
    double ibo_db = 0.0;
    double ebn0_db = std::numeric_limits<double>::infinity();
    int channel_id = -1;
    std::size_t n_frames = 0;
    std::uint64_t seed = 0;
};

struct SubcarrierCombiner {
    std::vector<Monomial> terms;
    cvec coeffs;
    /// RMS of each feature over the training set.
    std::vector<double> feature_rms;
    double in_sample_mse = 0.0;
    bool ridge_fallback = false;
};

struct CombinerCoefficients {
    CombinerKind kind = CombinerKind::imd5;
    Provenance provenance = Provenance::trained_with_channel;
    TrainingInfo info;
    std::vector<int> used_indices;
    std::vector<SubcarrierCombiner> subcarriers;
};

/// Requirement on training-set size relative to the widest term set.
inline constexpr std::size_t kOverdetermination = 10;

namespace detail {

inline DesignMatrix design_matrix(std::span<const cvec> frames, const std::vector<Monomial>& terms) {
    DesignMatrix a(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t f = 0; f < frames.size(); ++f)
        for (std::size_t j = 0; j < terms.size(); ++j)
            a(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(j)) = terms[j].eval(frames[f]);
    return a;
}

inline void fill_combiner(SubcarrierCombiner& sc, const DesignMatrix& a, const CVector& b, Solution sol) {
    sc.coeffs.assign(sol.coeffs.data(), sol.coeffs.data() + sol.coeffs.size());
    sc.feature_rms.resize(sc.terms.size());
    const double rows = static_cast<double>(a.rows());
    for (Eigen::Index j = 0; j < a.cols(); ++j) sc.feature_rms[static_cast<std::size_t>(j)] = a.col(j).norm() / std::sqrt(rows);
    sc.in_sample_mse = (a * sol.coeffs - b).squaredNorm() / rows;
}

// Column-scaled solve with the documented ridge fallback on rank deficiency.
inline std::vector<Solution> robust_solve(const DesignMatrix& a, const Eigen::MatrixXcd& b, double ridge, bool& fallback) {
    auto sols = lstsq_scaled_multi(a, b, ridge);
    fallback = false;
    if (ridge == 0.0 && sols.front().rank_deficient) {
        // scaled columns have squared norm equal to the row count
        sols = lstsq_scaled_multi(a, b, 1e-8 * static_cast<double>(a.rows()));
        fallback = true;
    }
    return sols;
}

}  // namespace detail

/// Least-squares fit of d_k on the monomials of the received frames, one
/// independent problem per subcarrier.
inline CombinerCoefficients hoc_train(std::span<const cvec> received, std::span<const cvec> sent,
                                      const std::vector<int>& indices, CombinerKind kind, double ridge,
                                      Provenance provenance, TrainingInfo info) {
    if (received.size() != sent.size()) throw std::invalid_argument("hoc_train: received/sent frame counts differ");
    const auto terms = combiner_terms(indices, kind);
    std::size_t widest = 0;
    for (const auto& t : terms) widest = std::max(widest, t.size());
    if (received.size() < kOverdetermination * widest)
        throw std::invalid_argument("hoc_train: " + std::to_string(received.size()) + " frames for " +
                                    std::to_string(widest) + " coefficients; need at least " +
                                    std::to_string(kOverdetermination * widest));
    const std::size_t n = indices.size();
    for (std::size_t f = 0; f < received.size(); ++f)
        if (received[f].size() != n || sent[f].size() != n) throw std::invalid_argument("hoc_train: frame size mismatch");

    info.n_frames = received.size();
    CombinerCoefficients out{kind, provenance, info, indices, std::vector<SubcarrierCombiner>(n)};
    const auto rows = static_cast<Eigen::Index>(received.size());
    Eigen::MatrixXcd targets(rows, static_cast<Eigen::Index>(n));
    for (Eigen::Index f = 0; f < rows; ++f)
        for (std::size_t k = 0; k < n; ++k) targets(f, static_cast<Eigen::Index>(k)) = sent[static_cast<std::size_t>(f)][k];

    if (kind == CombinerKind::full3) {
        // identical regressors for every target: one factorization
        const DesignMatrix a = detail::design_matrix(received, terms.front());
        bool fallback = false;
        auto sols = detail::robust_solve(a, targets, ridge, fallback);
        for (std::size_t k = 0; k < n; ++k) {
            auto& sc = out.subcarriers[k];
            sc.terms = terms[k];
            sc.ridge_fallback = fallback;
            detail::fill_combiner(sc, a, targets.col(static_cast<Eigen::Index>(k)), std::move(sols[k]));
        }
        return out;
    }

    for (std::size_t k = 0; k < n; ++k) {
        auto& sc = out.subcarriers[k];
        sc.terms = terms[k];
        const DesignMatrix a = detail::design_matrix(received, sc.terms);
        const CVector b = targets.col(static_cast<Eigen::Index>(k));
        auto sols = detail::robust_solve(a, b, ridge, sc.ridge_fallback);
        detail::fill_combiner(sc, a, b, std::move(sols.front()));
    }
    return out;
}

/// d_k = <c_k, features_k(r)> for every frame.
inline std::vector<cvec> combine(std::span<const cvec> frames, const CombinerCoefficients& coeffs) {
    const std::size_t n = coeffs.subcarriers.size();
    for (const auto& sc : coeffs.subcarriers)
        if (sc.coeffs.size() != sc.terms.size()) throw std::invalid_argument("combine: coefficient/term misalignment");
    std::vector<cvec> out;
    out.reserve(frames.size());
    for (const auto& r : frames) {
        if (r.size() != n) throw std::invalid_argument("combine: frame size does not match combiner");
        cvec d(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& sc = coeffs.subcarriers[k];
            cplx acc{};
            for (std::size_t j = 0; j < sc.terms.size(); ++j) acc += sc.coeffs[j] * sc.terms[j].eval(r);
            d[k] = acc;
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline DetectionResult hoc_detect(std::span<const cvec> received, const CombinerCoefficients& coeffs,
                                  const QamConstellation& qam) {
    if (coeffs.provenance != Provenance::trained_with_channel)
        throw std::invalid_argument("hoc_detect: coefficients were not trained with the channel");
    DetectionResult res;
    res.symbols = combine(received, coeffs);
    detail::hard_decide(res, qam);
    return res;
}

/// Noiseless, channel-free training pairs (PA output at the occupied
/// subcarriers, sent symbols) and their fit. The result depends only on the
/// transmitter, so it can be cached per PA operating point.
inline CombinerCoefficients lchoc_train(const Transmitter& tx, std::size_t n_frames, std::uint64_t seed,
                                        CombinerKind kind = CombinerKind::imd5, double ridge = 0.0) {
    Rng rng(seed);
    const std::size_t n = tx.config().n_used();
    std::vector<cvec> sent(n_frames), observed(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        sent[f] = random_frame(tx.qam(), n, rng).data;
        observed[f] = tx.transmit(sent[f]);
    }
    TrainingInfo info;
    info.ibo_db = tx.operating_point().ibo_db;
    info.seed = seed;
    return hoc_train(observed, sent, tx.config().used_indices, kind, ridge, Provenance::trained_pa_only, info);
}

/// Zero-forcing equalization followed by the PA-only combiner.
inline DetectionResult lchoc_detect(std::span<const cvec> received, const ChannelRealization& ch,
                                    const CombinerCoefficients& coeffs, const QamConstellation& qam) {
    if (coeffs.provenance != Provenance::trained_pa_only)
        throw std::invalid_argument("lchoc_detect: coefficients must be trained on PA output only");
    std::vector<cvec> eq;
    eq.reserve(received.size());
    for (const auto& r : received) {
        if (r.size() != ch.gains.size()) throw std::invalid_argument("lchoc_detect: frame size does not match channel");
        eq.push_back(detail::equalize(r, ch.gains));
    }
    DetectionResult res;
    res.zero_gain_events = detail::zero_gain_count(ch.gains);
    res.symbols = combine(eq, coeffs);
    detail::hard_decide(res, qam);
    return res;
}

// ---------------------------------------------------------------------------
// Sparsity of the unrestricted third-order combiner.

struct SparsityRow {
    Monomial term;
    cplx coeff;
    /// |coeff| times the feature's training RMS: the term's typical
    /// contribution to the estimate, independent of signal scaling.
    double influence = 0.0;
    bool in_support = false;
};

struct SparsityReport {
    int target = 0;
    std::vector<SparsityRow> rows;
    std::size_t support_size = 0;
    bool top_terms_match_support = false;
    double max_in_support = 0.0;
    double max_out_of_support = 0.0;

    double out_of_support_ratio() const { return max_in_support > 0.0 ? max_out_of_support / max_in_support : 0.0; }

    std::string to_text() const {
        std::ostringstream os;
        os << "target " << target << "  support " << support_size << "  top-terms-match-support "
           << (top_terms_match_support ? "yes" : "no") << "  max-out/max-in " << std::scientific << std::setprecision(3)
           << out_of_support_ratio() << "\n";
        os << std::defaultfloat;
        os << "  rank  influence     |coeff|       support  term\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            os << "  " << std::setw(4) << i << "  " << std::scientific << std::setprecision(3) << r.influence << "  "
               << std::abs(r.coeff) << "  " << (r.in_support ? "yes    " : "no     ") << "  " << r.term.str() << "\n";
        }
        return os.str();
    }
};

inline SparsityReport sparsity_report(const CombinerCoefficients& full, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= full.subcarriers.size())
        throw std::invalid_argument("sparsity_report: target out of range");
    const auto& sc = full.subcarriers[static_cast<std::size_t>(k)];
    SparsityReport rep;
    rep.target = k;
    for (std::size_t j = 0; j < sc.terms.size(); ++j) {
        SparsityRow row{sc.terms[j], sc.coeffs[j], std::abs(sc.coeffs[j]) * sc.feature_rms[j],
                        in_imd3_support(sc.terms[j], full.used_indices, k)};
        rep.support_size += row.in_support;
        (row.in_support ? rep.max_in_support : rep.max_out_of_support) =
            std::max(row.in_support ? rep.max_in_support : rep.max_out_of_support, row.influence);
        rep.rows.push_back(row);
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const SparsityRow& a, const SparsityRow& b) { return a.influence > b.influence; });
    rep.top_terms_match_support =
        std::all_of(rep.rows.begin(), rep.rows.begin() + static_cast<std::ptrdiff_t>(rep.support_size),
                    [](const SparsityRow& r) { return r.in_support; });
    return rep;
}

// ---------------------------------------------------------------------------
// Text serialization. Doubles are written with 17 significant digits so a
// round trip reproduces the coefficients bit for bit.

inline std::string to_text(const CombinerCoefficients& c) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "hoc-combiner 1\n";
    os << "kind " << to_string(c.kind) << "\n";
    os << "provenance " << to_string(c.provenance) << "\n";
    os << "ibo_db " << c.info.ibo_db << "\n";
    os << "ebn0_db " << c.info.ebn0_db << "\n";
    os << "channel_id " << c.info.channel_id << "\n";
    os << "n_frames " << c.info.n_frames << "\n";
    os << "seed " << c.info.seed << "\n";
    os << "used_indices " << c.used_indices.size();
    for (int i : c.used_indices) os << " " << i;
    os << "\n";
    for (std::size_t k = 0; k < c.subcarriers.size(); ++k) {
        const auto& sc = c.subcarriers[k];
        os << "subcarrier " << k << " " << sc.terms.size() << " " << sc.in_sample_mse << " " << sc.ridge_fallback << "\n";
        for (std::size_t j = 0; j < sc.terms.size(); ++j) {
            const auto& m = sc.terms[j];
            os << int(m.n_plain) << " " << int(m.n_conj);
            for (int i = 0; i < m.degree(); ++i) os << " " << m.idx[i];
            os << " " << sc.coeffs[j].real() << " " << sc.coeffs[j].imag() << " " << sc.feature_rms[j] << "\n";
        }
    }
    return os.str();
}

inline CombinerCoefficients combiner_from_text(const std::string& text) {
    std::istringstream is(text);
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(is >> got) || got != key) throw std::runtime_error("combiner text: expected '" + key + "', got '" + got + "'");
    };
    // iostreams reject "inf"; read doubles as tokens
    auto read_double = [&]() {
        std::string tok;
        if (!(is >> tok)) throw std::runtime_error("combiner text: truncated");
        return std::stod(tok);
    };
    CombinerCoefficients c;
    std::string s;
    int version = 0;
    expect("hoc-combiner");
    is >> version;
    if (version != 1) throw std::runtime_error("combiner text: unsupported version");
    expect("kind");
    is >> s;
    c.kind = combiner_kind_from_string(s);
    expect("provenance");
    is >> s;
    if (s == "trained_with_channel") c.provenance = Provenance::trained_with_channel;
    else if (s == "trained_pa_only") c.provenance = Provenance::trained_pa_only;
    else throw std::runtime_error("combiner text: unknown provenance " + s);
    expect("ibo_db");
    c.info.ibo_db = read_double();
    expect("ebn0_db");
    c.info.ebn0_db = read_double();
    expect("channel_id");
    is >> c.info.channel_id;
    expect("n_frames");
    is >> c.info.n_frames;
    expect("seed");
    is >> c.info.seed;
    expect("used_indices");
    std::size_t n = 0;
    is >> n;
    c.used_indices.resize(n);
    for (auto& i : c.used_indices) is >> i;
    c.subcarriers.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        expect("subcarrier");
        std::size_t kk = 0, nt = 0;
        is >> kk >> nt;
        if (kk != k) throw std::runtime_error("combiner text: subcarriers out of order");
        auto& sc = c.subcarriers[k];
        sc.in_sample_mse = read_double();
        is >> sc.ridge_fallback;
        sc.terms.resize(nt);
        sc.coeffs.resize(nt);
        sc.feature_rms.resize(nt);
        for (std::size_t j = 0; j < nt; ++j) {
            int np = 0, nc = 0;
            is >> np >> nc;
            if (np < 0 || nc < 0 || np + nc > 5) throw std::runtime_error("combiner text: bad monomial");
            auto& m = sc.terms[j];
            m.n_plain = static_cast<std::uint8_t>(np);
            m.n_conj = static_cast<std::uint8_t>(nc);
            for (int i = 0; i < np + nc; ++i) is >> m.idx[i];
            const double re = read_double();
            const double im = read_double();
            sc.coeffs[j] = {re, im};
            sc.feature_rms[j] = read_double();
        }
    }
    if (!is) throw std::runtime_error("combiner text: truncated");
    return c;
}

}  // namespace hoc

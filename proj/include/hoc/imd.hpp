#pragma once

// Intermodulation index tuples and the monomial features built from them.
//
// A received symbol r_k collects, besides the linear image of d_k, products
// d_k1 d_k2 d_k3^* (and fifth-order analogues) whose subcarrier indices close
// on I_k. The combiners below use the same monomials of the *received*
// symbols as regressors.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hoc/ofdm.hpp"

namespace hoc {

/// Product of up to five received symbols: r_{idx[0]} ... r_{idx[n_plain-1]}
/// times the conjugates of the following `n_conj` entries. Positions are
/// subcarrier positions (0..N_U-1), not FFT bin indices.
struct Monomial {
    std::array<int, 5> idx{};
    std::uint8_t n_plain = 0;
    std::uint8_t n_conj = 0;

    int degree() const { return n_plain + n_conj; }

    friend bool operator==(const Monomial& a, const Monomial& b) {
        if (a.n_plain != b.n_plain || a.n_conj != b.n_conj) return false;
        return std::equal(a.idx.begin(), a.idx.begin() + a.degree(), b.idx.begin());
    }

    /// Text form, e.g. "r0 r1 r2*".
    std::string str() const {
        std::ostringstream os;
        for (int i = 0; i < degree(); ++i) os << (i ? " " : "") << "r" << idx[i] << (i >= n_plain ? "*" : "");
        return os.str();
    }

    cplx eval(std::span<const cplx> r) const {
        cplx acc{1.0, 0.0};
        for (int i = 0; i < n_plain; ++i) acc *= r[idx[i]];
        for (int i = n_plain; i < degree(); ++i) acc *= std::conj(r[idx[i]]);
        return acc;
    }
};

inline Monomial make_monomial(std::initializer_list<int> plain, std::initializer_list<int> conj) {
    Monomial m;
    int i = 0;
    for (int v : plain) m.idx[i++] = v;
    for (int v : conj) m.idx[i++] = v;
    m.n_plain = static_cast<std::uint8_t>(plain.size());
    m.n_conj = static_cast<std::uint8_t>(conj.size());
    return m;
}

using Imd3Tuple = std::array<int, 3>;
using Imd5Tuple = std::array<int, 5>;

namespace detail {

inline void check_target(const std::vector<int>& indices, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= indices.size())
        throw std::invalid_argument("imd enumeration: target position " + std::to_string(k) + " out of range");
}

// Position of each FFT index in the used set.
inline std::map<int, int> position_map(const std::vector<int>& indices) {
    std::map<int, int> pos;
    for (std::size_t i = 0; i < indices.size(); ++i) pos.emplace(indices[i], static_cast<int>(i));
    return pos;
}

}  // namespace detail

/// (k1, k2, k3), k1 <= k2, with I_k1 + I_k2 - I_k3 = I_k; lexicographic.
inline std::vector<Imd3Tuple> enum_imd3(const std::vector<int>& indices, int k) {
    detail::check_target(indices, k);
    const auto pos = detail::position_map(indices);
    const int n = static_cast<int>(indices.size());
    std::vector<Imd3Tuple> out;
    for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = k1; k2 < n; ++k2)
            if (auto it = pos.find(indices[k1] + indices[k2] - indices[k]); it != pos.end())
                out.push_back({k1, k2, it->second});
    return out;
}

/// (k1..k5), k1 <= k2 <= k3 and k4 <= k5, with
/// I_k1 + I_k2 + I_k3 - I_k4 - I_k5 = I_k; lexicographic.
inline std::vector<Imd5Tuple> enum_imd5(const std::vector<int>& indices, int k) {
    detail::check_target(indices, k);
    const auto pos = detail::position_map(indices);
    const int n = static_cast<int>(indices.size());
    std::vector<Imd5Tuple> out;
    for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = k1; k2 < n; ++k2)
            for (int k3 = k2; k3 < n; ++k3) {
                const int excess = indices[k1] + indices[k2] + indices[k3] - indices[k];
                for (int k4 = 0; k4 < n; ++k4) {
                    // indices ascend, so I_k5 >= I_k4 bounds the search
                    const int need = excess - indices[k4];
                    if (need < indices[k4]) break;
                    if (auto it = pos.find(need); it != pos.end()) out.push_back({k1, k2, k3, k4, it->second});
                }
            }
    return out;
}

/// Linear term plus IMD3 (and optionally IMD5) tuples for one target.
struct ImdTermSet {
    int target = 0;
    std::vector<Imd3Tuple> imd3;
    std::vector<Imd5Tuple> imd5;

    std::size_t size() const { return 1 + imd3.size() + imd5.size(); }

    /// [linear, imd3..., imd5...]
    std::vector<Monomial> monomials() const {
        std::vector<Monomial> out;
        out.reserve(size());
        out.push_back(make_monomial({target}, {}));
        for (const auto& t : imd3) out.push_back(make_monomial({t[0], t[1]}, {t[2]}));
        for (const auto& t : imd5) out.push_back(make_monomial({t[0], t[1], t[2]}, {t[3], t[4]}));
        return out;
    }
};

inline ImdTermSet make_term_set(const std::vector<int>& indices, int k, int max_order) {
    if (max_order != 1 && max_order != 3 && max_order != 5)
        throw std::invalid_argument("make_term_set: max_order must be 1, 3 or 5");
    detail::check_target(indices, k);
    ImdTermSet ts{k, {}, {}};
    if (max_order >= 3) ts.imd3 = enum_imd3(indices, k);
    if (max_order >= 5) ts.imd5 = enum_imd5(indices, k);
    return ts;
}

/// The nine monomial families of the unrestricted third-order combiner, in
/// order: r, r*, r r, r* r, r* r*, r r r, r* r r, r* r* r, r* r* r*.
///
/// Conjugated factors come first in each family's printed form; internally a
/// Monomial keeps plain factors first. Within each group (plain / conjugated)
/// positions are non-decreasing, and a mixed family leaves the two groups
/// independent. That gives family sizes n, n, C(n+1,2), n^2, C(n+1,2),
/// C(n+2,3), n C(n+1,2), n C(n+1,2), C(n+2,3).
struct FullThirdOrderTermSet {
    static constexpr std::array<std::pair<int, int>, 9> kFamilies{
        {{1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}}};  // (plain, conj)

    int target = 0;
    std::array<std::vector<Monomial>, 9> families;

    std::size_t size() const {
        std::size_t s = 0;
        for (const auto& f : families) s += f.size();
        return s;
    }

    std::vector<Monomial> monomials() const {
        std::vector<Monomial> out;
        out.reserve(size());
        for (const auto& f : families) out.insert(out.end(), f.begin(), f.end());
        return out;
    }
};

namespace detail {

// All non-decreasing sequences of length `len` over [0, n).
inline std::vector<std::vector<int>> sorted_sequences(int n, int len) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(len, 0);
    if (len == 0) return {{}};
    while (true) {
        out.push_back(cur);
        int i = len - 1;
        while (i >= 0 && cur[i] == n - 1) --i;
        if (i < 0) break;
        ++cur[i];
        for (int j = i + 1; j < len; ++j) cur[j] = cur[i];
    }
    return out;
}

}  // namespace detail

inline FullThirdOrderTermSet enum_full3(const std::vector<int>& indices, int k) {
    detail::check_target(indices, k);
    const int n = static_cast<int>(indices.size());
    FullThirdOrderTermSet ts;
    ts.target = k;
    for (std::size_t f = 0; f < ts.kFamilies.size(); ++f) {
        const auto [np, nc] = ts.kFamilies[f];
        // Conjugated group varies slowest, matching the printed order.
        for (const auto& conj : detail::sorted_sequences(n, nc))
            for (const auto& plain : detail::sorted_sequences(n, np)) {
                Monomial m;
                int i = 0;
                for (int v : plain) m.idx[i++] = v;
                for (int v : conj) m.idx[i++] = v;
                m.n_plain = static_cast<std::uint8_t>(np);
                m.n_conj = static_cast<std::uint8_t>(nc);
                ts.families[f].push_back(m);
            }
    }
    return ts;
}

/// True when `m` is the target's linear term or a closure-satisfying
/// r r r* product, the support the reduced third-order combiner keeps.
inline bool in_imd3_support(const Monomial& m, const std::vector<int>& indices, int k) {
    if (m.n_plain == 1 && m.n_conj == 0) return m.idx[0] == k;
    if (m.n_plain == 2 && m.n_conj == 1)
        return indices[m.idx[0]] + indices[m.idx[1]] - indices[m.idx[2]] == indices[k];
    return false;
}

inline cvec build_features(std::span<const cplx> r, std::span<const Monomial> terms, std::size_t n_used) {
    if (r.size() != n_used) throw std::invalid_argument("build_features: symbol vector size mismatch");
    cvec out(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) out[i] = terms[i].eval(r);
    return out;
}

inline cvec build_features(std::span<const cplx> r, const ImdTermSet& terms, std::size_t n_used) {
    const auto m = terms.monomials();
    return build_features(r, m, n_used);
}

inline cvec build_features(std::span<const cplx> r, const FullThirdOrderTermSet& terms, std::size_t n_used) {
    const auto m = terms.monomials();
    return build_features(r, m, n_used);
}

/// "target <k>" followed by one line per family ("imd3" / "imd5") listing tuples.
inline std::string to_text(const ImdTermSet& ts) {
    std::ostringstream os;
    os << "target " << ts.target << "\n";
    os << "imd3 " << ts.imd3.size();
    for (const auto& t : ts.imd3) os << " " << t[0] << "," << t[1] << "," << t[2];
    os << "\nimd5 " << ts.imd5.size();
    for (const auto& t : ts.imd5) os << " " << t[0] << "," << t[1] << "," << t[2] << "," << t[3] << "," << t[4];
    os << "\n";
    return os.str();
}

}  // namespace hoc

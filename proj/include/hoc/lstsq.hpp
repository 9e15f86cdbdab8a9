#pragma once

// Dense complex least squares, the training step of every learned combiner.
//
// Ridge-free problems with independent columns use a Householder QR; rank
// deficient ones go through a complete orthogonal decomposition, which yields
// the minimum-norm solution and a numerical rank. Ridge problems are
// solved as the augmented system [A; sqrt(ridge) I] x = [b; 0] with a
// Householder QR.

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hoc/ofdm.hpp"

namespace hoc {

using DesignMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

struct Solution {
    CVector coeffs;
    double residual_norm = 0.0;
    /// Ratio of extreme diagonal magnitudes of the triangular factor.
    double condition_estimate = 0.0;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

namespace detail {

inline double r_diag_ratio(const Eigen::MatrixXcd& r, Eigen::Index rank) {
    if (rank == 0) return std::numeric_limits<double>::infinity();
    return std::abs(r(0, 0)) / std::abs(r(rank - 1, rank - 1));
}

}  // namespace detail

/// Minimizes ||A X - B||^2 + ridge ||X||^2 column by column, sharing one
/// factorization across right-hand sides.
inline std::vector<Solution> lstsq_multi(const DesignMatrix& a, const Eigen::MatrixXcd& b, double ridge = 0.0) {
    if (a.rows() != b.rows()) throw std::invalid_argument("lstsq: right-hand side length does not match row count");
    if (ridge < 0.0) throw std::invalid_argument("lstsq: ridge must be non-negative");
    if (a.cols() == 0) throw std::invalid_argument("lstsq: empty design matrix");

    Eigen::MatrixXcd x;
    Eigen::Index rank = a.cols();
    double cond = 0.0;
    if (ridge == 0.0) {
        // Blocked Householder QR first; its triangular factor tells whether
        // the columns are numerically independent, in which case the
        // solution is unique. Otherwise fall back to the pivoted COD.
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
        const auto diag = qr.matrixQR().diagonal().cwiseAbs().eval();
        const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(a.rows(), a.cols()));
        const double dmax = diag.maxCoeff();
        const double dmin = diag.minCoeff();
        if (a.rows() >= a.cols() && dmin > tol * dmax) {
            x = qr.solve(b);
            cond = dmax / dmin;
        } else {
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(a);
            x = cod.solve(b);
            rank = cod.rank();
            cond = detail::r_diag_ratio(cod.matrixQTZ(), rank);
        }
    } else {
        Eigen::MatrixXcd aug(a.rows() + a.cols(), a.cols());
        aug.topRows(a.rows()) = a;
        aug.bottomRows(a.cols()) = Eigen::MatrixXcd::Identity(a.cols(), a.cols()) * std::sqrt(ridge);
        Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(aug.rows(), b.cols());
        rhs.topRows(a.rows()) = b;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(aug);
        x = qr.solve(rhs);
        cond = detail::r_diag_ratio(qr.matrixQR(), a.cols());
    }

    std::vector<Solution> out(static_cast<std::size_t>(b.cols()));
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        auto& s = out[static_cast<std::size_t>(j)];
        s.coeffs = x.col(j);
        s.residual_norm = (a * s.coeffs - b.col(j)).norm();
        s.condition_estimate = cond;
        s.rank = rank;
        s.rank_deficient = rank < a.cols();
    }
    return out;
}

inline Solution lstsq(const DesignMatrix& a, const CVector& b, double ridge = 0.0) {
    return std::move(lstsq_multi(a, b, ridge).front());
}

struct ColumnScaling {
    DesignMatrix scaled;
    Eigen::VectorXd scales;
    std::vector<Eigen::Index> degenerate_columns;
};

/// Divides each column by its RMS magnitude. All-zero columns keep scale 1
/// and are listed in `degenerate_columns`.
inline ColumnScaling column_scale(const DesignMatrix& a) {
    ColumnScaling cs{a, Eigen::VectorXd::Ones(a.cols()), {}};
    const double rows = static_cast<double>(std::max<Eigen::Index>(a.rows(), 1));
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double rms = a.col(j).norm() / std::sqrt(rows);
        if (rms == 0.0) {
            cs.degenerate_columns.push_back(j);
            continue;
        }
        cs.scales(j) = rms;
        cs.scaled.col(j) /= rms;
    }
    return cs;
}

/// lstsq on the column-scaled matrix with coefficients mapped back to the
/// original columns. The ridge acts on the scaled problem.
inline std::vector<Solution> lstsq_scaled_multi(const DesignMatrix& a, const Eigen::MatrixXcd& b, double ridge = 0.0) {
    const auto cs = column_scale(a);
    auto sols = lstsq_multi(cs.scaled, b, ridge);
    for (auto& s : sols) s.coeffs = s.coeffs.cwiseQuotient(cs.scales.cast<cplx>());
    return sols;
}

}  // namespace hoc

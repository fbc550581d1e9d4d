#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

namespace ghmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a computation cannot continue because of non-finite or
/// ill-conditioned numbers (as opposed to caller misuse).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string &message) {
    if (!condition) throw std::invalid_argument(message);
}

inline void require_same_shape(const Matrix &a, const Matrix &b, const char *what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

inline Matrix sym(const Matrix &a) { return 0.5 * (a + a.transpose()); }

inline double max_abs(const Matrix &a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

/// max |XᵀX − I|
inline double orthonormality_residual(const Matrix &x) {
    return max_abs(x.transpose() * x - Matrix::Identity(x.cols(), x.cols()));
}

inline bool all_finite(const Matrix &a) { return a.allFinite(); }

/// Matrix exponential by scaling and squaring with Padé approximants.
inline Matrix expm(const Matrix &a) { return a.exp(); }

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

} // namespace ghmc

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace ghmc {

enum class DataKind { Continuous, Binary, Count };

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// N x d observations with a missingness mask (true = observed) and
/// optional per-row labels.
struct MaskedDataMatrix {
    Matrix values;
    Mask mask;
    DataKind kind = DataKind::Continuous;
    std::optional<Vector> labels;

    MaskedDataMatrix() = default;
    MaskedDataMatrix(Matrix v, Mask m, DataKind k, std::optional<Vector> y = std::nullopt)
        : values(std::move(v)), mask(std::move(m)), kind(k), labels(std::move(y)) {
        validate();
    }

    static MaskedDataMatrix fully_observed(Matrix v, DataKind k, std::optional<Vector> y = std::nullopt) {
        Mask m = Mask::Constant(v.rows(), v.cols(), true);
        return MaskedDataMatrix(std::move(v), std::move(m), k, std::move(y));
    }

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    bool observed(Eigen::Index i, Eigen::Index j) const { return mask(i, j); }
    Eigen::Index observed_count() const { return mask.count(); }
    bool complete() const { return mask.all(); }

    /// Subset of rows by index; labels follow.
    MaskedDataMatrix select_rows(const std::vector<Eigen::Index> &idx) const {
        Matrix v(static_cast<Eigen::Index>(idx.size()), cols());
        Mask m(static_cast<Eigen::Index>(idx.size()), cols());
        std::optional<Vector> y;
        if (labels) y = Vector(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto i = static_cast<Eigen::Index>(r);
            v.row(i) = values.row(idx[r]);
            m.row(i) = mask.row(idx[r]);
            if (labels) (*y)(i) = (*labels)(idx[r]);
        }
        return MaskedDataMatrix(std::move(v), std::move(m), kind, std::move(y));
    }

    void validate() const {
        require(mask.rows() == values.rows() && mask.cols() == values.cols(), "MaskedDataMatrix: mask shape mismatch");
        if (labels) require(labels->size() == values.rows(), "MaskedDataMatrix: label count mismatch");
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            for (Eigen::Index i = 0; i < values.rows(); ++i) {
                if (!mask(i, j)) continue;
                const double x = values(i, j);
                if (!std::isfinite(x)) throw std::invalid_argument("MaskedDataMatrix: observed value is not finite");
                if (kind == DataKind::Binary && x != 0.0 && x != 1.0)
                    throw std::invalid_argument("MaskedDataMatrix: binary data must be 0 or 1");
                if (kind == DataKind::Count && (x < 0.0 || x != std::floor(x)))
                    throw std::invalid_argument("MaskedDataMatrix: count data must be non-negative integers");
            }
        }
    }
};

} // namespace ghmc

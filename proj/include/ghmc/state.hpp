#pragma once

#include <string>
#include <utility>
#include <vector>

#include "manifold.hpp"

namespace ghmc {

/// One named parameter. Vectors are stored as n x 1 matrices; LogPositive
/// blocks hold the logarithms of their (positive) values.
struct ParameterBlock {
    std::string name;
    Geometry geometry;
    Matrix value;
};

/// Per-block ambient gradients (or velocities), aligned with ProductState::blocks.
using BlockMatrices = std::vector<Matrix>;

class ProductState {
  public:
    ProductState() = default;
    explicit ProductState(std::vector<ParameterBlock> blocks) : blocks_(std::move(blocks)) { validate_names(); }

    void add(std::string name, Geometry geometry, Matrix value) {
        blocks_.push_back({std::move(name), geometry, std::move(value)});
        validate_names();
    }

    std::size_t size() const { return blocks_.size(); }
    ParameterBlock &operator[](std::size_t i) { return blocks_[i]; }
    const ParameterBlock &operator[](std::size_t i) const { return blocks_[i]; }
    const std::vector<ParameterBlock> &blocks() const { return blocks_; }

    std::size_t index(const std::string &name) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (blocks_[i].name == name) return i;
        throw std::invalid_argument("ProductState: no block named '" + name + "'");
    }
    const Matrix &value(const std::string &name) const { return blocks_[index(name)].value; }
    Matrix &value(const std::string &name) { return blocks_[index(name)].value; }

    /// Zero matrices shaped like each block.
    BlockMatrices zeros() const {
        BlockMatrices out;
        out.reserve(blocks_.size());
        for (const auto &b : blocks_) out.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
        return out;
    }

    /// Throws if a manifold block violates its orthonormality invariant.
    void validate(double tol = kOrthonormalTolerance) const {
        for (const auto &b : blocks_) {
            if (!all_finite(b.value)) throw std::invalid_argument("block '" + b.name + "' has non-finite entries");
            if (is_manifold(b.geometry)) {
                const double r = orthonormality_residual(b.value);
                if (!(r <= tol))
                    throw std::invalid_argument("block '" + b.name + "' is not orthonormal (residual " +
                                                std::to_string(r) + ")");
            }
        }
    }

    bool operator==(const ProductState &other) const {
        if (blocks_.size() != other.blocks_.size()) return false;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto &a = blocks_[i];
            const auto &b = other.blocks_[i];
            if (a.name != b.name || a.geometry != b.geometry || a.value.rows() != b.value.rows() ||
                a.value.cols() != b.value.cols() || a.value != b.value)
                return false;
        }
        return true;
    }

  private:
    void validate_names() const {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            for (std::size_t j = i + 1; j < blocks_.size(); ++j)
                if (blocks_[i].name == blocks_[j].name)
                    throw std::invalid_argument("ProductState: duplicate block name '" + blocks_[i].name + "'");
    }

    std::vector<ParameterBlock> blocks_;
};

} // namespace ghmc

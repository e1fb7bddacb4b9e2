#ifndef HSAFFINE_WEIGHTS_HPP
#define HSAFFINE_WEIGHTS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "hsaffine/sym_op.hpp"

namespace hsaffine {

/// Diagonal weights a_1 <= a_2 <= ... <= a_D (a_1 >= 1) defining a compactly
/// embedded space V in H and the operator space built from it.
template <typename Scalar>
class WeightModel {
public:
    using Vector = typename SymOp<Scalar>::Vector;

    explicit WeightModel(Vector a) : a_(std::move(a)) {
        if (a_.size() == 0) throw InvalidInput("WeightModel: empty weight vector");
        if (!(a_(0) >= Scalar(1))) throw InvalidInput("WeightModel: a_1 must be >= 1");
        for (Eigen::Index i = 1; i < a_.size(); ++i)
            if (!(a_(i) >= a_(i - 1))) throw InvalidInput("WeightModel: weights must be nondecreasing");
    }

    /// a_n = n.
    static WeightModel linear(Eigen::Index dim) {
        return WeightModel(Vector::LinSpaced(dim, Scalar(1), Scalar(dim)));
    }

    Eigen::Index dim() const { return a_.size(); }
    Scalar operator[](Eigen::Index i) const { return a_(i); }
    const Vector& weights() const { return a_; }

    /// Constant C with ||u|| <= C ||u||_V.
    Scalar embedding_constant() const { return Scalar(1) / (std::sqrt(Scalar(2)) * a_(0)); }

private:
    Vector a_;
};

using WeightModeld = WeightModel<double>;

/// (sum_{i,j} (a_i^2 + a_j^2) u_ij^2)^{1/2}
template <typename Scalar>
Scalar vnorm(const SymOp<Scalar>& u, const WeightModel<Scalar>& w) {
    if (u.dim() != w.dim()) throw DimensionMismatch("vnorm: weight model dimension differs");
    const auto a2 = w.weights().array().square().matrix();
    Scalar s = Scalar(0);
    for (Eigen::Index j = 0; j < u.dim(); ++j)
        for (Eigen::Index i = 0; i < u.dim(); ++i) s += (a2(i) + a2(j)) * u(i, j) * u(i, j);
    const Scalar r = std::sqrt(s);
    if (!std::isfinite(r)) throw NonFiniteState("vnorm is not finite");
    return r;
}

/// 1/a_{d+1}: bound on ||P_d^perp|| as a map V -> H. Zero at d = D.
template <typename Scalar>
Scalar perp_vnorm_bound(Eigen::Index d, const WeightModel<Scalar>& w) {
    if (d < 1 || d > w.dim()) throw LevelOutOfRange("perp_vnorm_bound: level out of range");
    if (d == w.dim()) return Scalar(0);
    return Scalar(1) / w[d];
}

}  // namespace hsaffine

#endif  // HSAFFINE_WEIGHTS_HPP

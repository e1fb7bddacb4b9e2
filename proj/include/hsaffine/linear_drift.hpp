#ifndef HSAFFINE_LINEAR_DRIFT_HPP
#define HSAFFINE_LINEAR_DRIFT_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <utility>
#include <variant>
#include <vector>

#include "hsaffine/sym_op.hpp"

namespace hsaffine {

/// One rank-coupling term u -> <u, A> H of a structured drift.
template <typename Scalar>
struct Coupling {
    SymOp<Scalar> A;
    SymOp<Scalar> H;
};

/// Bounded linear operator B on symmetric D x D operators.
///
/// Two representations:
///  - structured: B(u) = C u + u C^T + sum_j <u, A_j> H_j, with C a general D x D matrix;
///  - dense: an N x N matrix (N = D(D+1)/2) acting on SymOp coordinates.
/// An optional support level s < D turns the map into P_s o B o P_s.
template <typename Scalar>
class LinearDrift {
public:
    using Matrix = typename SymOp<Scalar>::Matrix;
    using Vector = typename SymOp<Scalar>::Vector;

    struct Structured {
        Matrix C;
        std::vector<Coupling<Scalar>> couplings;
    };
    struct Dense {
        Matrix L;
    };

    LinearDrift() = default;

    static LinearDrift zero(Eigen::Index dim) { return structured(Matrix::Zero(dim, dim), {}); }

    static LinearDrift structured(Matrix C, std::vector<Coupling<Scalar>> couplings = {}) {
        if (C.rows() != C.cols() || C.rows() == 0) throw DimensionMismatch("drift matrix C must be square");
        for (const auto& c : couplings)
            if (c.A.dim() != C.rows() || c.H.dim() != C.rows())
                throw DimensionMismatch("coupling dimension differs from C");
        LinearDrift b;
        b.dim_ = C.rows();
        b.support_ = b.dim_;
        b.rep_ = Structured{std::move(C), std::move(couplings)};
        return b;
    }

    static LinearDrift dense(Eigen::Index dim, Matrix L) {
        if (L.rows() != coord_count(dim) || L.cols() != coord_count(dim))
            throw DimensionMismatch("dense drift must be N x N with N = D(D+1)/2");
        LinearDrift b;
        b.dim_ = dim;
        b.support_ = dim;
        b.rep_ = Dense{std::move(L)};
        return b;
    }

    Eigen::Index dim() const { return dim_; }
    Eigen::Index support() const { return support_; }
    bool is_structured() const { return std::holds_alternative<Structured>(rep_); }
    const Structured* as_structured() const { return std::get_if<Structured>(&rep_); }
    const Dense* as_dense() const { return std::get_if<Dense>(&rep_); }

    SymOp<Scalar> apply(const SymOp<Scalar>& u) const { return eval(u, false); }
    SymOp<Scalar> adjoint(const SymOp<Scalar>& u) const { return eval(u, true); }

    /// Coordinate matrix of the map (column k is the image of basis element k).
    Matrix to_dense() const {
        const Eigen::Index n = coord_count(dim_);
        if (const auto* d = as_dense(); d && support_ == dim_) return d->L;
        Matrix L(n, n);
        Vector e = Vector::Zero(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            e(k) = Scalar(1);
            L.col(k) = apply(SymOp<Scalar>::from_coords(dim_, e)).coords();
            e(k) = Scalar(0);
        }
        return L;
    }

    /// Converts a structured drift to its dense coordinate form.
    LinearDrift densified() const {
        LinearDrift b = dense(dim_, to_dense());
        return b;
    }

    /// P_d o B o P_d. Structured drifts keep their form, with C and couplings projected.
    LinearDrift restricted(Eigen::Index d) const {
        if (d < 1 || d > dim_) throw LevelOutOfRange("restricted: level out of range");
        LinearDrift b = *this;
        b.support_ = std::min(d, support_);
        if (auto* s = std::get_if<Structured>(&b.rep_)) {
            Matrix C = Matrix::Zero(dim_, dim_);
            C.topLeftCorner(d, d) = s->C.topLeftCorner(d, d);
            s->C = std::move(C);
            for (auto& c : s->couplings) {
                c.A = project(d, c.A);
                c.H = project(d, c.H);
            }
        }
        return b;
    }

    /// Adds terms u -> <u, A> H.
    LinearDrift with_couplings(const std::vector<Coupling<Scalar>>& extra) const {
        LinearDrift b = *this;
        if (auto* s = std::get_if<Structured>(&b.rep_)) {
            s->couplings.insert(s->couplings.end(), extra.begin(), extra.end());
        } else {
            auto& L = std::get<Dense>(b.rep_).L;
            for (const auto& c : extra) L.noalias() += c.H.coords() * c.A.coords().transpose();
        }
        return b;
    }

private:
    SymOp<Scalar> eval(const SymOp<Scalar>& u_in, bool adj) const {
        if (u_in.dim() != dim_) throw DimensionMismatch("LinearDrift: operand dimension differs");
        const bool restrict = support_ < dim_;
        const SymOp<Scalar> u = restrict ? project(support_, u_in) : u_in;
        SymOp<Scalar> out;
        if (const auto* s = as_structured()) {
            Matrix cu = adj ? Matrix(s->C.transpose() * u.matrix()) : Matrix(s->C * u.matrix());
            // C u + u C^T (or C^T u + u C): the second term is the transpose of the first.
            out = SymOp<Scalar>::from_upper(cu + cu.transpose());
            for (const auto& c : s->couplings) {
                if (adj) out.add_scaled(hs_inner(u, c.H), c.A);
                else out.add_scaled(hs_inner(u, c.A), c.H);
            }
        } else {
            const auto& L = std::get<Dense>(rep_).L;
            const Vector x = u.coords();
            out = SymOp<Scalar>::from_coords(dim_, adj ? Vector(L.transpose() * x) : Vector(L * x));
        }
        return restrict ? project(support_, out) : out;
    }

    Eigen::Index dim_ = 0;
    Eigen::Index support_ = 0;
    std::variant<Structured, Dense> rep_;
};

using LinearDriftd = LinearDrift<double>;

/// Operator norm of B on (H, HS norm), by power iteration on L^T L.
template <typename Scalar>
Scalar operator_norm(const LinearDrift<Scalar>& B, Scalar tol = Scalar(1e-8), int max_iter = 100000) {
    using Matrix = typename LinearDrift<Scalar>::Matrix;
    using Vector = typename LinearDrift<Scalar>::Vector;
    const Matrix L = B.to_dense();
    const Matrix G = L.transpose() * L;
    const Eigen::Index n = G.rows();
    Vector x(n);
    for (Eigen::Index k = 0; k < n; ++k) x(k) = Scalar(1) + Scalar(k) / Scalar(n + 1);
    x.normalize();
    Scalar lam = Scalar(0);
    for (int it = 0; it < max_iter; ++it) {
        Vector y = G * x;
        const Scalar nrm = y.norm();
        if (nrm == Scalar(0)) return Scalar(0);
        const Scalar next = nrm;
        y /= nrm;
        const bool done = std::abs(next - lam) <= tol * next;
        lam = next;
        x = std::move(y);
        if (done) break;
    }
    return std::sqrt(lam);
}

/// e^{t B*} u by classical fourth-order Runge-Kutta with `steps` equal steps.
template <typename Scalar>
SymOp<Scalar> drift_flow(const LinearDrift<Scalar>& B, Scalar t, const SymOp<Scalar>& u, int steps) {
    if (t < Scalar(0)) throw InvalidInput("drift_flow: t must be nonnegative");
    if (steps < 1) throw InvalidInput("drift_flow: steps must be >= 1");
    const Scalar h = t / Scalar(steps);
    SymOp<Scalar> x = u;
    for (int s = 0; s < steps; ++s) {
        const SymOp<Scalar> k1 = B.adjoint(x);
        const SymOp<Scalar> k2 = B.adjoint(x + (h / 2) * k1);
        const SymOp<Scalar> k3 = B.adjoint(x + (h / 2) * k2);
        const SymOp<Scalar> k4 = B.adjoint(x + h * k3);
        x += (h / 6) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    }
    return x;
}

/// e^{t B*} u via the matrix exponential of the coordinate superoperator
/// (Pade approximant with scaling and squaring).
template <typename Scalar>
SymOp<Scalar> drift_flow_expm(const LinearDrift<Scalar>& B, Scalar t, const SymOp<Scalar>& u) {
    using Matrix = typename LinearDrift<Scalar>::Matrix;
    const Matrix Lt = (t * B.to_dense().transpose()).eval();
    const Matrix E = Lt.exp();
    return SymOp<Scalar>::from_coords(B.dim(), E * u.coords());
}

}  // namespace hsaffine

#endif  // HSAFFINE_LINEAR_DRIFT_HPP

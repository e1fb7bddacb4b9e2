#ifndef HSAFFINE_SYM_OP_HPP
#define HSAFFINE_SYM_OP_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "hsaffine/errors.hpp"

namespace hsaffine {

/// Number of orthonormal coordinates of a symmetric dim x dim operator.
constexpr Eigen::Index coord_count(Eigen::Index dim) { return dim * (dim + 1) / 2; }

/// Position of basis element e_{i,j} (i <= j) in the row-major upper-triangle order.
constexpr Eigen::Index coord_index(Eigen::Index i, Eigen::Index j, Eigen::Index dim) {
    return i * dim - i * (i - 1) / 2 + (j - i);
}

/// Self-adjoint Hilbert-Schmidt operator at ambient resolution D, in matrix coordinates.
///
/// Values are built from an upper triangle that is mirrored, so entry (i,j) and
/// entry (j,i) are the same double. The Frobenius norm of the matrix is the
/// Hilbert-Schmidt norm of the operator. The coordinate vector uses the
/// orthonormal basis e_{i,i} = e_i (x) e_i and e_{i,j} = (e_i (x) e_j + e_j (x) e_i)/sqrt(2),
/// i.e. diagonal entries u_ii and off-diagonal entries sqrt(2) u_ij.
template <typename Scalar>
class SymOp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    SymOp() = default;

    explicit SymOp(Eigen::Index dim) : m_(Matrix::Zero(dim, dim)) {
        if (dim <= 0) throw InvalidInput("SymOp dimension must be positive");
    }

    /// Takes the upper triangle of `upper` and mirrors it.
    template <typename Derived>
    static SymOp from_upper(const Eigen::MatrixBase<Derived>& upper) {
        if (upper.rows() != upper.cols() || upper.rows() == 0)
            throw DimensionMismatch("SymOp needs a non-empty square matrix");
        SymOp s;
        s.m_ = upper.template selfadjointView<Eigen::Upper>();
        return s;
    }

    /// Accepts a full matrix only if it is symmetric within `tol` (absolute).
    template <typename Derived>
    static SymOp from_symmetric(const Eigen::MatrixBase<Derived>& full, Scalar tol = Scalar(1e-12)) {
        if (full.rows() != full.cols() || full.rows() == 0)
            throw DimensionMismatch("SymOp needs a non-empty square matrix");
        const Scalar asym = (full - full.transpose()).cwiseAbs().maxCoeff();
        if (!(asym <= tol)) throw InvalidInput("matrix is not symmetric (max |a_ij - a_ji| = " +
                                               std::to_string(static_cast<double>(asym)) + ")");
        return from_upper(full);
    }

    static SymOp zero(Eigen::Index dim) { return SymOp(dim); }

    static SymOp identity(Eigen::Index dim) { return from_upper(Matrix::Identity(dim, dim)); }

    /// Orthonormal basis element e_{i,j} (0-based indices).
    static SymOp basis(Eigen::Index dim, Eigen::Index i, Eigen::Index j) {
        SymOp s(dim);
        if (i == j) {
            s.m_(i, i) = Scalar(1);
        } else {
            const Scalar v = Scalar(1) / std::sqrt(Scalar(2));
            s.m_(i, j) = v;
            s.m_(j, i) = v;
        }
        return s;
    }

    /// Rank-one operator v (x) v.
    template <typename Derived>
    static SymOp outer(const Eigen::MatrixBase<Derived>& v) {
        return from_upper(v * v.transpose());
    }

    static SymOp from_coords(Eigen::Index dim, const Vector& c) {
        if (c.size() != coord_count(dim)) throw DimensionMismatch("coordinate vector has wrong length");
        SymOp s(dim);
        const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            s.m_(i, i) = c(k++);
            for (Eigen::Index j = i + 1; j < dim; ++j) {
                const Scalar v = c(k++) * inv_sqrt2;
                s.m_(i, j) = v;
                s.m_(j, i) = v;
            }
        }
        return s;
    }

    Vector coords() const {
        const Eigen::Index n = dim();
        Vector c(coord_count(n));
        const Scalar sqrt2 = std::sqrt(Scalar(2));
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            c(k++) = m_(i, i);
            for (Eigen::Index j = i + 1; j < n; ++j) c(k++) = sqrt2 * m_(i, j);
        }
        return c;
    }

    Eigen::Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    Scalar operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

    Scalar norm() const { return m_.norm(); }
    Scalar squared_norm() const { return m_.squaredNorm(); }
    bool all_finite() const { return m_.allFinite(); }

    SymOp& operator+=(const SymOp& o) { check_dim(o); m_ += o.m_; return *this; }
    SymOp& operator-=(const SymOp& o) { check_dim(o); m_ -= o.m_; return *this; }
    SymOp& operator*=(Scalar a) { m_ *= a; return *this; }

    friend SymOp operator+(SymOp a, const SymOp& b) { a += b; return a; }
    friend SymOp operator-(SymOp a, const SymOp& b) { a -= b; return a; }
    friend SymOp operator-(SymOp a) { a.m_ = -a.m_; return a; }
    friend SymOp operator*(Scalar s, SymOp a) { a *= s; return a; }
    friend SymOp operator*(SymOp a, Scalar s) { a *= s; return a; }
    friend SymOp operator/(SymOp a, Scalar s) { a.m_ /= s; return a; }

    friend bool operator==(const SymOp& a, const SymOp& b) {
        return a.dim() == b.dim() && a.m_ == b.m_;
    }

    /// Adds `a * x` in place (axpy); keeps exact symmetry.
    SymOp& add_scaled(Scalar a, const SymOp& x) { check_dim(x); m_.noalias() += a * x.m_; return *this; }

private:
    void check_dim(const SymOp& o) const {
        if (o.dim() != dim()) throw DimensionMismatch("SymOp dimensions differ");
    }

    Matrix m_;
};

using SymOpd = SymOp<double>;

template <typename Scalar>
Scalar hs_inner(const SymOp<Scalar>& a, const SymOp<Scalar>& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("hs_inner: dimensions differ");
    return a.matrix().cwiseProduct(b.matrix()).sum();
}

template <typename Scalar>
void check_level(Eigen::Index d, const SymOp<Scalar>& u) {
    if (d < 1 || d > u.dim())
        throw LevelOutOfRange("level " + std::to_string(d) + " outside [1, " + std::to_string(u.dim()) + "]");
}

/// P_d(u): keeps the leading d x d block.
template <typename Scalar>
SymOp<Scalar> project(Eigen::Index d, const SymOp<Scalar>& u) {
    check_level(d, u);
    typename SymOp<Scalar>::Matrix m = SymOp<Scalar>::Matrix::Zero(u.dim(), u.dim());
    m.topLeftCorner(d, d) = u.matrix().topLeftCorner(d, d);
    return SymOp<Scalar>::from_upper(m);
}

template <typename Scalar>
SymOp<Scalar> project_perp(Eigen::Index d, const SymOp<Scalar>& u) {
    return u - project(d, u);
}

/// True when every entry with max(i,j) >= d (0-based) is exactly zero.
template <typename Scalar>
bool is_supported_on(Eigen::Index d, const SymOp<Scalar>& u) {
    const Eigen::Index n = u.dim();
    if (d >= n) return true;
    return (u.matrix().rightCols(n - d).array() == Scalar(0)).all();
}

/// Smallest k such that u is supported on the leading k x k block.
template <typename Scalar>
Eigen::Index active_block(const SymOp<Scalar>& u) {
    Eigen::Index k = u.dim();
    while (k > 0 && (u.matrix().col(k - 1).array() == Scalar(0)).all()) --k;
    return k;
}

/// chi(xi) = xi if ||xi|| <= 1, else 0.
template <typename Scalar>
SymOp<Scalar> truncation_chi(const SymOp<Scalar>& xi) {
    return xi.norm() <= Scalar(1) ? xi : SymOp<Scalar>::zero(xi.dim());
}

template <typename Scalar>
Scalar min_eigenvalue(const SymOp<Scalar>& u) {
    const Eigen::Index k = active_block(u);
    if (k == 0) return Scalar(0);
    Eigen::SelfAdjointEigenSolver<typename SymOp<Scalar>::Matrix> es(
        u.matrix().topLeftCorner(k, k), Eigen::EigenvaluesOnly);
    const Scalar lo = es.eigenvalues()(0);
    return k < u.dim() ? std::min(lo, Scalar(0)) : lo;
}

inline constexpr double kDefaultClampTol = 1e-9;

/// Removes negative eigenvalues that are within `tol` of zero.
///
/// The eigen-decomposition only runs on the active leading block, so operators
/// supported on the same block give identical results regardless of D.
/// Returns u unchanged when it is already PSD.
template <typename Scalar>
SymOp<Scalar> psd_clamp(const SymOp<Scalar>& u, Scalar tol = Scalar(kDefaultClampTol)) {
    if (tol < Scalar(0)) throw InvalidInput("psd_clamp: tolerance must be nonnegative");
    if (!u.all_finite()) throw NonFiniteState("psd_clamp: non-finite entries");
    const Eigen::Index k = active_block(u);
    if (k == 0) return u;
    using Matrix = typename SymOp<Scalar>::Matrix;
    Eigen::SelfAdjointEigenSolver<Matrix> es(u.matrix().topLeftCorner(k, k));
    const auto& lam = es.eigenvalues();
    // Negative eigenvalues at the solver's rounding level are noise, not clamp events.
    const Scalar noise = Scalar(16) * std::numeric_limits<Scalar>::epsilon() * lam.cwiseAbs().maxCoeff();
    if (lam(0) >= -noise) return u;
    if (lam(0) < -tol) throw ClampBeyondTolerance(static_cast<double>(lam(0)), static_cast<double>(tol));
    const auto& v = es.eigenvectors();
    Matrix block = v * lam.cwiseMax(Scalar(0)).asDiagonal() * v.transpose();
    Matrix full = Matrix::Zero(u.dim(), u.dim());
    full.topLeftCorner(k, k) = block;
    return SymOp<Scalar>::from_upper(full);
}

}  // namespace hsaffine

#endif  // HSAFFINE_SYM_OP_HPP

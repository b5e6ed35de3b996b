#pragma once

#include "spamm/types.hpp"

namespace spamm {

/// Partitioned inverse of an SPD matrix Sigma = [[A, B], [C, D]] where A is
/// the block on the positions in `u` and D the block on the complement.
///
///   S  = D - C A^-1 B            (Schur complement)
///   Ã  = A^-1 + A^-1 B S^-1 C A^-1
///   B̃  = -A^-1 B S^-1
///   C̃  = -S^-1 C A^-1
///   D̃  = S^-1
///
/// and det(Sigma) = det(A) det(S).
struct BlockInverse {
    IndexSet u;   // positions of the leading block
    IndexSet uc;  // complementary positions
    Eigen::MatrixXd A_tilde;
    Eigen::MatrixXd B_tilde;
    Eigen::MatrixXd C_tilde;
    Eigen::MatrixXd D_tilde;
    Eigen::MatrixXd schur;
    double log_det_A = 0.0;
    double log_det_schur = 0.0;

    /// The full inverse in the original index order.
    [[nodiscard]] Eigen::MatrixXd assemble() const;
    [[nodiscard]] double determinant() const { return std::exp(log_det_A + log_det_schur); }
    [[nodiscard]] double log_determinant() const { return log_det_A + log_det_schur; }
};

/// `u` holds positions 0..n-1 of `cov`; it must be a proper non-empty subset.
BlockInverse block_inverse(const Eigen::MatrixXd& cov, const IndexSet& u);

struct ConditionalParams {
    Eigen::VectorXd mean_bar;
    Eigen::MatrixXd cov_bar;
};

/// Parameters of X_{u^c} | (X_u = x_u, L_u = l_u) for a Gaussian over
/// positions 0..n-1 with the given mean and covariance. `u` are positions.
ConditionalParams conditional_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                       const IndexSet& u, const Eigen::VectorXd& x_u,
                                       const Eigen::VectorXd& l_u);

/// Same for a WrappedFull component; `u` holds global dimension indices and
/// must be a strict non-empty subset of comp.u. The result is over
/// comp.u \ u in increasing index order.
ConditionalParams conditional_params(const MixtureComponent& comp, const IndexSet& u,
                                     const Eigen::VectorXd& x_u, const Eigen::VectorXd& l_u);

/// Positions of the entries of `sub` inside the sorted set `super`.
IndexSet positions_in(const IndexSet& super, const IndexSet& sub);

Eigen::MatrixXd select_block(const Eigen::MatrixXd& m, const IndexSet& rows, const IndexSet& cols);
Eigen::VectorXd select(const Eigen::VectorXd& v, const IndexSet& idx);

}  // namespace spamm

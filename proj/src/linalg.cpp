#include "spamm/linalg.hpp"

#include <algorithm>
#include <sstream>

namespace spamm {

IndexSet positions_in(const IndexSet& super, const IndexSet& sub) {
    IndexSet pos;
    pos.reserve(sub.size());
    for (int i : sub) {
        auto it = std::lower_bound(super.begin(), super.end(), i);
        if (it == super.end() || *it != i) throw ContractError("index not contained in component set");
        pos.push_back(static_cast<int>(it - super.begin()));
    }
    return pos;
}

Eigen::MatrixXd select_block(const Eigen::MatrixXd& m, const IndexSet& rows, const IndexSet& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    return out;
}

Eigen::VectorXd select(const Eigen::VectorXd& v, const IndexSet& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    return out;
}

namespace {

IndexSet complement_positions(int n, const IndexSet& u) {
    IndexSet uc;
    for (int i = 0; i < n; ++i)
        if (!std::binary_search(u.begin(), u.end(), i)) uc.push_back(i);
    return uc;
}

void check_positions(int n, const IndexSet& u) {
    if (!std::is_sorted(u.begin(), u.end()) || std::adjacent_find(u.begin(), u.end()) != u.end())
        throw ContractError("block index set must be sorted and duplicate-free");
    for (int i : u)
        if (i < 0 || i >= n) throw ContractError("block index out of range");
}

}  // namespace

BlockInverse block_inverse(const Eigen::MatrixXd& cov, const IndexSet& u) {
    const int n = static_cast<int>(cov.rows());
    if (cov.cols() != n) throw ContractError("block_inverse: matrix must be square");
    check_positions(n, u);
    if (u.empty() || static_cast<int>(u.size()) == n)
        throw ContractError("block_inverse: u must be a proper non-empty subset");

    BlockInverse r;
    r.u = u;
    r.uc = complement_positions(n, u);
    const Eigen::MatrixXd A = select_block(cov, r.u, r.u);
    const Eigen::MatrixXd B = select_block(cov, r.u, r.uc);
    const Eigen::MatrixXd C = select_block(cov, r.uc, r.u);
    const Eigen::MatrixXd D = select_block(cov, r.uc, r.uc);

    Eigen::LLT<Eigen::MatrixXd> llt_a(A);
    if (llt_a.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "block_inverse: leading block of size " << A.rows() << " is singular or indefinite";
        throw NumericError(msg.str());
    }
    const Eigen::MatrixXd A_inv_B = llt_a.solve(B);
    r.schur = D - C * A_inv_B;
    r.schur = 0.5 * (r.schur + r.schur.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt_s(r.schur);
    if (llt_s.info() != Eigen::Success)
        throw NumericError("block_inverse: Schur complement is not positive definite");

    const Eigen::MatrixXd L_a = llt_a.matrixL();
    const Eigen::MatrixXd L_s = llt_s.matrixL();
    r.log_det_A = 2.0 * L_a.diagonal().array().log().sum();
    r.log_det_schur = 2.0 * L_s.diagonal().array().log().sum();

    r.D_tilde = llt_s.solve(Eigen::MatrixXd::Identity(r.schur.rows(), r.schur.cols()));
    r.B_tilde = -A_inv_B * r.D_tilde;
    r.C_tilde = r.B_tilde.transpose();
    const Eigen::MatrixXd A_inv = llt_a.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    r.A_tilde = A_inv - r.B_tilde * C * A_inv;
    r.A_tilde = 0.5 * (r.A_tilde + r.A_tilde.transpose());
    return r;
}

Eigen::MatrixXd BlockInverse::assemble() const {
    const auto n = static_cast<Eigen::Index>(u.size() + uc.size());
    Eigen::MatrixXd inv(n, n);
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < u.size(); ++j) inv(u[i], u[j]) = A_tilde(i, j);
        for (std::size_t j = 0; j < uc.size(); ++j) inv(u[i], uc[j]) = B_tilde(i, j);
    }
    for (std::size_t i = 0; i < uc.size(); ++i) {
        for (std::size_t j = 0; j < u.size(); ++j) inv(uc[i], u[j]) = C_tilde(i, j);
        for (std::size_t j = 0; j < uc.size(); ++j) inv(uc[i], uc[j]) = D_tilde(i, j);
    }
    return inv;
}

ConditionalParams conditional_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                       const IndexSet& u, const Eigen::VectorXd& x_u,
                                       const Eigen::VectorXd& l_u) {
    const int n = static_cast<int>(cov.rows());
    if (cov.cols() != n || mean.size() != n) throw ContractError("conditional: shape mismatch");
    check_positions(n, u);
    if (u.empty() || static_cast<int>(u.size()) == n)
        throw ContractError("conditional: u must be a strict non-empty subset");
    if (x_u.size() != static_cast<Eigen::Index>(u.size()) || l_u.size() != x_u.size())
        throw ContractError("conditional: x_u / l_u length mismatch");

    const IndexSet uc = complement_positions(n, u);
    const Eigen::MatrixXd S_uu = select_block(cov, u, u);
    const Eigen::MatrixXd S_cu = select_block(cov, uc, u);
    Eigen::LLT<Eigen::MatrixXd> llt(S_uu);
    if (llt.info() != Eigen::Success) throw NumericError("conditional: conditioning block is singular");

    const Eigen::VectorXd innovation = x_u + l_u - select(mean, u);
    ConditionalParams p;
    p.mean_bar = select(mean, uc) + S_cu * llt.solve(innovation);
    p.cov_bar = select_block(cov, uc, uc) - S_cu * llt.solve(S_cu.transpose());
    p.cov_bar = 0.5 * (p.cov_bar + p.cov_bar.transpose());
    return p;
}

ConditionalParams conditional_params(const MixtureComponent& comp, const IndexSet& u,
                                     const Eigen::VectorXd& x_u, const Eigen::VectorXd& l_u) {
    if (comp.family != Family::WrappedFull)
        throw ContractError("conditional_params needs a wrapped_full component");
    return conditional_gaussian(comp.mean, comp.cov, positions_in(comp.u, u), x_u, l_u);
}

}  // namespace spamm

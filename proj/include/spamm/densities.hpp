#pragma once

#include "spamm/types.hpp"

#include <span>
#include <vector>

namespace spamm {

/// Truncated lattice sum for a multivariate Gaussian on the unit torus.
///
/// The lattice box [-B,B]^n is placed around the nearest image of the mean,
/// i.e. the offset x - mean is first reduced coordinatewise to [-1/2, 1/2).
/// This makes the truncated density exactly 1-periodic in every coordinate
/// and keeps the omitted terms at distance >= B + 1/2 from the mean.
class WrappedGaussianKernel {
public:
    WrappedGaussianKernel(const Eigen::MatrixXd& cov, int B);

    [[nodiscard]] int dim() const { return n_; }
    [[nodiscard]] int truncation() const { return B_; }
    [[nodiscard]] std::size_t num_shifts() const { return shift_quad_.size(); }
    /// Integer shift vectors, one per column.
    [[nodiscard]] const Eigen::MatrixXd& shifts() const { return shifts_; }
    [[nodiscard]] const Eigen::MatrixXd& precision() const { return precision_; }
    /// -n/2 log(2 pi) - 1/2 log det(cov)
    [[nodiscard]] double log_norm() const { return log_norm_; }

    /// Fills out[s] = -1/2 (d + l_s)^T P (d + l_s) for a centered offset d.
    void log_shift_terms(std::span<const double> centered_offset, std::span<double> out) const;
    /// log of the truncated wrapped density at a centered offset.
    [[nodiscard]] double log_pdf_centered(std::span<const double> centered_offset) const;

private:
    int n_;
    int B_;
    Eigen::MatrixXd precision_;
    Eigen::MatrixXd shifts_;
    Eigen::VectorXd shift_quad_;  // l^T P l
    double log_norm_;
};

/// Univariate truncated wrapped-normal log density at a centered offset.
double log_wrapped_normal_1d(double centered_offset, double var, int B);

/// N_w^B(x | mean, cov): truncated wrapped Gaussian density on T^n.
double wrapped_normal_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov, int B);
double log_wrapped_normal_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov, int B);

/// Product of univariate truncated wrapped normals.
double wrapped_normal_pdf_diag(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& var, int B);

/// Product of univariate von Mises densities on the unit period:
/// prod_i exp(kappa_i cos(2 pi (x_i - mean_i))) / I_0(kappa_i).
double von_mises_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                     const Eigen::VectorXd& kappa);
double log_von_mises_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& kappa);

/// Cached evaluator for one mixture component. Evaluates on full-dimensional
/// points and gathers the coordinates in `u` itself.
class ComponentDensity {
public:
    ComponentDensity(const MixtureComponent& component, int B);

    [[nodiscard]] const MixtureComponent& component() const { return *component_; }
    /// log p(x_u | theta) for a point with all model coordinates.
    [[nodiscard]] double log_pdf(const double* x_full) const;
    /// log p for a point that already holds only the coordinates in u.
    [[nodiscard]] double log_pdf_local(std::span<const double> x_u) const;
    /// Value at the mean (the mode of each supported family).
    [[nodiscard]] double peak() const;
    /// Non-null only for the WrappedFull family.
    [[nodiscard]] const WrappedGaussianKernel* kernel() const {
        return kernel_.empty() ? nullptr : &kernel_.front();
    }

private:
    const MixtureComponent* component_;
    int B_;
    std::vector<WrappedGaussianKernel> kernel_;  // zero or one element
    Eigen::VectorXd log_i0_;                     // von Mises normalisers
};

/// Evaluator for a whole model; the model must outlive it.
class MixtureEvaluator {
public:
    explicit MixtureEvaluator(const SparseMixtureModel& model);

    [[nodiscard]] const SparseMixtureModel& model() const { return *model_; }
    [[nodiscard]] std::size_t size() const { return densities_.size(); }
    [[nodiscard]] const ComponentDensity& density(std::size_t k) const { return densities_[k]; }

    /// log(alpha_k) + log p_k(x) for every k.
    void log_joint(const double* x_full, std::span<double> out) const;
    [[nodiscard]] double log_pdf(const double* x_full) const;
    [[nodiscard]] double pdf(const double* x_full) const;

private:
    const SparseMixtureModel* model_;
    std::vector<ComponentDensity> densities_;
    Eigen::VectorXd log_alpha_;
};

/// log(sum(exp(v))) with -inf handling.
double log_sum_exp(std::span<const double> v);

}  // namespace spamm

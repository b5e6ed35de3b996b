#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spamm {

/// Raised when a parameter lies outside the domain of a density
/// (non-SPD covariance, non-positive variance or concentration).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised on violated preconditions: dimension mismatches, malformed input.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation breaks down numerically (singular blocks,
/// samples with zero density under every component).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using IndexSet = std::vector<int>;

/// Reduce a real to the unit period: x - floor(x), guarded so the result
/// is always strictly below 1.
inline double wrap01(double x) {
    double r = x - std::floor(x);
    if (r >= 1.0) r = 0.0;
    return r;
}

/// Nearest-image offset in [-0.5, 0.5).
inline double centered(double x) {
    return x - std::floor(x + 0.5);
}

/// Circular distance between two torus coordinates.
inline double circular_distance(double a, double b) {
    return std::abs(centered(a - b));
}

class TorusPoint {
public:
    TorusPoint() = default;
    explicit TorusPoint(Eigen::VectorXd coords);

    [[nodiscard]] const Eigen::VectorXd& coords() const { return coords_; }
    [[nodiscard]] Eigen::Index dim() const { return coords_.size(); }
    double operator[](Eigen::Index i) const { return coords_[i]; }

private:
    Eigen::VectorXd coords_;
};

/// N points on the d-torus, stored one point per column, with non-negative
/// weights whose sum is positive.
class WeightedSampleSet {
public:
    WeightedSampleSet() = default;
    /// `points` is d x N. Throws ContractError on coordinates outside [0,1)
    /// unless `wrap` is set, in which case they are reduced mod 1.
    WeightedSampleSet(Eigen::MatrixXd points, Eigen::VectorXd weights, bool wrap = false);
    /// Unit weights.
    explicit WeightedSampleSet(Eigen::MatrixXd points, bool wrap = false);

    [[nodiscard]] Eigen::Index size() const { return points_.cols(); }
    [[nodiscard]] Eigen::Index dim() const { return points_.rows(); }
    [[nodiscard]] const Eigen::MatrixXd& points() const { return points_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
    [[nodiscard]] double total_weight() const { return weights_.sum(); }

    /// Same points, new weights (validated).
    [[nodiscard]] WeightedSampleSet reweighted(Eigen::VectorXd weights) const;
    /// Points restricted to the given coordinates (in that order).
    [[nodiscard]] WeightedSampleSet project(const IndexSet& dims) const;
    /// Drop points whose weight is at most `threshold`.
    [[nodiscard]] WeightedSampleSet compressed(double threshold) const;

private:
    Eigen::MatrixXd points_;
    Eigen::VectorXd weights_;
};

enum class Family { WrappedFull, WrappedDiag, VonMises, Uniform };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);

/// One summand of a sparse mixture: a density over the coordinates `u`.
/// Which parameter fields are populated depends on the family:
///   WrappedFull  mean, cov
///   WrappedDiag  mean, var
///   VonMises     mean, kappa
///   Uniform      none (u is empty)
struct MixtureComponent {
    IndexSet u;
    double alpha = 0.0;
    Family family = Family::Uniform;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd var;
    Eigen::VectorXd kappa;

    static MixtureComponent uniform(double alpha);
    static MixtureComponent wrapped_full(IndexSet u, double alpha, Eigen::VectorXd mean,
                                         Eigen::MatrixXd cov);
    static MixtureComponent wrapped_diag(IndexSet u, double alpha, Eigen::VectorXd mean,
                                         Eigen::VectorXd var);
    static MixtureComponent von_mises(IndexSet u, double alpha, Eigen::VectorXd mean,
                                      Eigen::VectorXd kappa);

    /// Throws DomainError / ContractError when the family invariants fail.
    void validate() const;

    /// Largest marginal standard deviation (0 for von Mises and uniform).
    [[nodiscard]] double max_stddev() const;
};

class SparseMixtureModel {
public:
    SparseMixtureModel() = default;
    SparseMixtureModel(int d, std::vector<MixtureComponent> components, int truncation_B);

    [[nodiscard]] int dim() const { return d_; }
    [[nodiscard]] int truncation_B() const { return B_; }
    [[nodiscard]] const std::vector<MixtureComponent>& components() const { return components_; }
    [[nodiscard]] std::size_t size() const { return components_.size(); }
    [[nodiscard]] Eigen::VectorXd weights() const;

    /// Checks simplex weights (1e-12), index ranges and the single-uniform rule.
    void validate() const;

private:
    int d_ = 0;
    int B_ = 1;
    std::vector<MixtureComponent> components_;
};

/// Default lattice truncation for period-1 wrapped Gaussians:
/// max(1, ceil(3 * sigma_max)).
int default_truncation(double sigma_max);

/// Sorted union/intersection helpers for index sets.
IndexSet set_intersection(const IndexSet& a, const IndexSet& b);
IndexSet set_union(const IndexSet& a, const IndexSet& b);
IndexSet set_difference(const IndexSet& a, const IndexSet& b);
bool contains(const IndexSet& a, int i);

}  // namespace spamm

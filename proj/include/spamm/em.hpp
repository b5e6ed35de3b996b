#pragma once

#include "spamm/stat_tests.hpp"
#include "spamm/types.hpp"

#include <cstdint>
#include <optional>

namespace spamm {

struct EmConfig {
    int max_iters = 200;
    double rel_tol = 1e-7;    // stop when (L_new - L_old) < rel_tol |L_old|
    double min_weight = 0.0;  // components below this weight are eliminated
    std::uint64_t seed = 0;
    double cov_floor = 1e-8;  // eigenvalue floor of wrapped covariances
    double kappa_min = 1e-3;
    double kappa_max = 1e4;

    void validate() const;
};

struct ProxConfig {
    double gamma = 1e-3;
};

struct EmResult {
    SparseMixtureModel model;
    std::vector<double> loglik;  // value at the start and after every iteration
    int iterations = 0;
    bool converged = false;
    /// For each output component, its position in the initial model.
    std::vector<std::size_t> origin;
};

struct EStep {
    Eigen::MatrixXd beta;  // N x K responsibilities
    double loglik = 0.0;
};

/// Responsibilities and the weighted log-likelihood of the current model.
/// Throws NumericError naming the first sample with zero density.
EStep e_step(const SparseMixtureModel& model, const WeightedSampleSet& samples);

struct WrappedUpdate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // diagonal for WrappedDiag
    double mass = 0.0;    // sum_n w_n beta_n
    bool degenerate = false;
};

/// M-step of one wrapped component, treating the lattice shift as latent.
/// `current` supplies the family, index set and the parameters that define
/// the shift posteriors; `resp` holds beta_{n,k} for this component.
WrappedUpdate m_step_wrapped(const WeightedSampleSet& samples, const Eigen::VectorXd& resp,
                             const MixtureComponent& current, int B, double cov_floor = 1e-8);

struct VonMisesUpdate {
    Eigen::VectorXd mean;
    Eigen::VectorXd kappa;
    double mass = 0.0;
    bool degenerate = false;
};

/// Weighted circular mean and kappa = A^-1(resultant length), clamped.
VonMisesUpdate m_step_von_mises(const WeightedSampleSet& samples, const Eigen::VectorXd& resp,
                                const IndexSet& u, double kappa_min = 1e-3, double kappa_max = 1e4);

struct ProxResult {
    Eigen::VectorXd alpha;  // same length as the input, zeros where dropped
    IndexSet kept;          // surviving positions, increasing
};

/// Proximal map of the l0 penalty restricted to the simplex. Drops the K0
/// smallest weights, K0 minimising
///   (1/(2 gamma)) (s_m^2 / (K - m) + sum_{k<=m} alpha_(k)^2) - m,
/// with s_m the mass of the m smallest, and spreads the dropped mass evenly
/// over the survivors.
ProxResult prox_l0_simplex(const Eigen::VectorXd& alpha, double gamma);

/// EM with an optional prox step on the mixing weights after every M-step.
EmResult em_fit_traced(const WeightedSampleSet& samples, const SparseMixtureModel& init,
                       const EmConfig& cfg, const std::optional<ProxConfig>& prox = std::nullopt);

SparseMixtureModel em_fit(const WeightedSampleSet& samples, const SparseMixtureModel& init,
                          const EmConfig& cfg);
SparseMixtureModel prox_em_fit(const WeightedSampleSet& samples, const SparseMixtureModel& init,
                               const ProxConfig& prox, const EmConfig& cfg);

struct FixedGroupResult {
    SparseMixtureModel model;  // fixed components first, then the refit free ones
    std::size_t n_fixed = 0;
    bool free_dropped = false;
};

/// Refit `free_init` on samples reweighted by the posterior mass of the free
/// group, holding `fixed` unchanged. Weights of fixed ∪ free must be on the
/// simplex. `d` is the model dimension, `B` the truncation.
FixedGroupResult fixed_group_em(const WeightedSampleSet& samples, const std::vector<MixtureComponent>& fixed,
                                const std::vector<MixtureComponent>& free_init,
                                const std::optional<ProxConfig>& prox, const EmConfig& cfg, int B);

enum class BicPenalty {
    LogWeight,  // p ln(sum w), the usual BIC penalty
    Printed,    // p without the log factor
};

struct BicConfig {
    int restarts = 4;
    BicPenalty penalty = BicPenalty::LogWeight;
    bool with_uniform = false;  // every candidate also carries a uniform component
    int B = 1;
};

struct BicResult {
    int k_opt = 1;
    SparseMixtureModel model;    // 1-D model of the selected candidate
    std::vector<double> bic;     // per k = 1..k_max (inf when every restart failed)
    std::vector<double> loglik;  // best log-likelihood per k
};

/// Fit k = 1..k_max univariate components and keep the BIC minimiser.
BicResult bic_select(const UnivariateWeightedSamples& samples, int k_max, Family family,
                     const EmConfig& cfg, const BicConfig& bic = {});

/// Number of free parameters counted by the BIC for a 1-D model: three per
/// non-uniform component, minus one for the simplex, plus one for a uniform
/// component's weight.
int bic_parameter_count(const SparseMixtureModel& model);

}  // namespace spamm

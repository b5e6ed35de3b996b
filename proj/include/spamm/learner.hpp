#pragma once

#include "spamm/em.hpp"
#include "spamm/types.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace spamm {

struct ActiveSetReport {
    Eigen::VectorXd ks_per_dim;    // scaled KS statistic per dimension
    Eigen::MatrixXd correlations;  // NaN rows/columns for constant coordinates
    IndexSet active;               // descending KS statistic
    IndexSet inactive;             // increasing index
};

nlohmann::json report_to_json(const ActiveSetReport& report);

struct LearnerConfig {
    double eps_ks = 5.0;
    double eps_c = 0.1;
    double gamma1 = 3e-3;  // prox rate of the joint refit
    double gamma2 = 1e-3;  // prox rate of the univariate fits
    int k_max = 3;
    Family family = Family::WrappedFull;
    EmConfig em;
    int B = 1;
    int bic_restarts = 4;
    BicPenalty bic_penalty = BicPenalty::LogWeight;
    double merge_tol = 1e-6;
    /// Reweighted sets with fewer effective samples are not extended.
    double min_effective_n = 10.0;

    void validate() const;
};

nlohmann::json config_to_json(const LearnerConfig& cfg);

struct LearnResult {
    SparseMixtureModel model;
    ActiveSetReport report;
    std::vector<nlohmann::json> trace;  // one event per processed dimension
    std::vector<std::string> warnings;
};

/// Dimension i is active when its KS statistic exceeds eps_ks, or when
/// |corr(i, j)| >= eps_c for some active j (applied until nothing changes).
ActiveSetReport detect_active_set(const WeightedSampleSet& samples, double eps_ks, double eps_c);

/// KS test of coordinate `dim` under weights w_n * resp_n. Degenerate
/// weights (no mass, or fewer than two effective samples) give false.
bool residual_active_test(const WeightedSampleSet& samples, const Eigen::VectorXd& resp, int dim,
                          double eps_ks);

LearnResult learn_sparse_mm(const WeightedSampleSet& samples, const LearnerConfig& cfg);

/// Component `parent` with coordinate `dim` appended from the univariate
/// component `child` (over index 0). Block-diagonal covariance; weight is
/// set by the caller.
MixtureComponent extend_component(const MixtureComponent& parent, int dim, const MixtureComponent& child);

}  // namespace spamm

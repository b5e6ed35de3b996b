#pragma once

#include "spamm/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace spamm {

using DensityFn = std::function<double(const double*)>;

/// A density on T^d with a known upper bound on its values.
class DensityOracle {
public:
    DensityOracle(int d, DensityFn f, double bound, std::string name);

    [[nodiscard]] int dim() const { return d_; }
    [[nodiscard]] double bound() const { return bound_; }
    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const DensityFn& function() const { return f_; }
    double operator()(const double* x) const { return f_(x); }

    /// Set for mixture oracles (f1, f2, models).
    [[nodiscard]] const SparseMixtureModel* model() const { return model_.get(); }

    static DensityOracle from_model(const SparseMixtureModel& model, std::string name = "model");

private:
    int d_;
    DensityFn f_;
    double bound_;
    std::string name_;
    std::shared_ptr<const SparseMixtureModel> model_;
};

enum class TestFunction { F1, F2, F2Alt, F3 };

TestFunction parse_test_function(const std::string& name);
std::string test_function_name(TestFunction id);

/// 15-dimensional two-component wrapped Gaussian mixture.
SparseMixtureModel f1_model();
/// f1 plus a univariate component on index 5 with mean `mu3`.
SparseMixtureModel f2_model(double mu3);

/// Cardinal B-spline of order m rescaled to [0,1] with unit mass:
/// B_m(x) = m N_m(m x), extended 1-periodically.
double bspline(int order, double x);

/// Index triples of the B-spline test function (0-based).
const std::vector<IndexSet>& f3_couplings();
/// Sum of the three B-spline products divided by 3 (each product has unit mass).
double f3_density(const double* x);
/// sup f3 = product of the three B-spline peaks.
double f3_bound();

DensityOracle make_test_function(TestFunction id);

/// n accepted points by uniform-proposal rejection sampling. Candidates are
/// drawn in fixed chunks with one RNG stream each, so the output depends
/// only on the seed.
WeightedSampleSet rejection_sample(const DensityOracle& oracle, Eigen::Index n, std::uint64_t seed);

/// (1/N) sum |f(x_n)|^p over N uniform points.
double mc_norm(const DensityFn& f, int d, int p, Eigen::Index n_mc, std::uint64_t seed);

/// (sum |f_hat - f|^p / sum |f|^p)^(1/p) on one shared uniform point set.
double relative_lp_error(const DensityFn& f_hat, const DensityFn& f, int d, int p, Eigen::Index n_mc,
                         std::uint64_t seed);

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// Two-column torus data: x ~ wrapped N(0.4, 0.1^2), y = x + 0.1 + noise.
WeightedSampleSet make_linreg_samples(Eigen::Index n, std::uint64_t seed, double noise_sd = 0.01);

}  // namespace spamm

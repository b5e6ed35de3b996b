#pragma once

#include "spamm/densities.hpp"
#include "spamm/types.hpp"

namespace spamm {

double mixture_pdf(const SparseMixtureModel& model, const TorusPoint& x);
double log_mixture_pdf(const SparseMixtureModel& model, const TorusPoint& x);

/// sum_n w_n log f(x^n). Returns -infinity (no throw) when some sample with
/// positive weight has zero density.
double log_likelihood(const SparseMixtureModel& model, const WeightedSampleSet& samples);

/// Per-sample log f(x^n).
Eigen::VectorXd log_density_values(const SparseMixtureModel& model, const WeightedSampleSet& samples);

/// beta_k = alpha_k p_k(x) / f(x). Throws NumericError when f(x) = 0.
Eigen::VectorXd posterior_responsibilities(const SparseMixtureModel& model, const TorusPoint& x);

/// Restriction of a component to the coordinates in v. The result keeps
/// global indices (u ∩ v) and the weight; it is Uniform when u ∩ v = ∅.
MixtureComponent marginal_component(const MixtureComponent& comp, const IndexSet& v);

/// True when both components have the same family and index set and their
/// parameters agree within tol (means compared on the circle).
bool components_match(const MixtureComponent& a, const MixtureComponent& b, double tol);

/// Combine matching components by summing weights. Order of first
/// occurrence is kept.
std::vector<MixtureComponent> merge_components(std::vector<MixtureComponent> comps, double tol);

/// Marginal model over the sorted coordinates v. Output dimension is |v| and
/// component indices are renumbered to positions in v.
SparseMixtureModel marginalize_model(const SparseMixtureModel& model, IndexSet v,
                                     double merge_tol = 1e-9);

struct Prediction {
    double wrapped = 0.5;    // in [0,1)
    double unwrapped = 0.5;  // affine value in the image of the raw features, before reduction mod 1
};

/// E[x_target | features] under a joint model. `features` holds the d-1
/// coordinates other than `target`, in increasing index order.
///
/// Components without the target contribute 0.5, diagonal and von Mises
/// components contribute their target mean, full wrapped Gaussians their
/// conditional mean at the most likely winding of the feature coordinates.
Prediction conditional_expectation(const SparseMixtureModel& joint, int target,
                                   const Eigen::VectorXd& features);

}  // namespace spamm

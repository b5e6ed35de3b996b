#pragma once

namespace spamm::bessel {

/// log I_0(x) for x >= 0. Power series below 15, Hankel asymptotic
/// expansion above; relative error of I_0 below 1e-12 on both branches.
/// Works in log space so large concentrations do not overflow.
double log_i0(double x);

/// log I_1(x) for x > 0, same branch split as log_i0.
double log_i1(double x);

/// I_1(x) / I_0(x), the mean resultant length of a von Mises law with
/// concentration x. Monotone increasing from 0 to 1.
double ratio_i1_i0(double x);

/// Solve ratio_i1_i0(kappa) = r for kappa, clamped to [kappa_min, kappa_max].
double inverse_ratio(double r, double kappa_min, double kappa_max);

}  // namespace spamm::bessel

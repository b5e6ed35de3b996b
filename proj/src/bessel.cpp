#include "spamm/bessel.hpp"

#include "spamm/types.hpp"

#include <cmath>
#include <numbers>

namespace spamm::bessel {
namespace {

constexpr double kSeriesCutoff = 15.0;

// sum_k (x/2)^(2k+nu) / (k! (k+nu)!) for nu in {0,1}
double series(int nu, double x) {
    const double q = 0.25 * x * x;
    double term = nu == 0 ? 1.0 : 0.5 * x;
    double sum = term;
    for (int k = 1; k < 500; ++k) {
        term *= q / (static_cast<double>(k) * (k + nu));
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return sum;
}

// log of I_nu(x) via e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
double log_asymptotic(int nu, double x) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    double prev = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * x);
        if (std::abs(term) > std::abs(prev)) break;  // series starts to diverge
        sum += term;
        prev = term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

}  // namespace

double log_i0(double x) {
    if (!(x >= 0.0)) throw DomainError("log_i0: argument must be non-negative");
    if (x < kSeriesCutoff) return std::log(series(0, x));
    return log_asymptotic(0, x);
}

double log_i1(double x) {
    if (!(x > 0.0)) throw DomainError("log_i1: argument must be positive");
    if (x < kSeriesCutoff) return std::log(series(1, x));
    return log_asymptotic(1, x);
}

double ratio_i1_i0(double x) {
    if (x <= 0.0) return 0.0;
    return std::exp(log_i1(x) - log_i0(x));
}

double inverse_ratio(double r, double kappa_min, double kappa_max) {
    if (!(r > ratio_i1_i0(kappa_min))) return kappa_min;
    if (r >= ratio_i1_i0(kappa_max)) return kappa_max;
    double lo = std::log(kappa_min);
    double hi = std::log(kappa_max);
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ratio_i1_i0(std::exp(mid)) < r) lo = mid;
        else hi = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace spamm::bessel

#include "spamm/densities.hpp"

#include "spamm/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace spamm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
// Terms more than e^-40 below the largest one cannot change a double sum.
constexpr double kNegligible = 40.0;
constexpr std::size_t kMaxShifts = 2'000'000;

}  // namespace

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v)
        if (m - x < 745.0) s += std::exp(x - m);
    return m + std::log(s);
}

WrappedGaussianKernel::WrappedGaussianKernel(const Eigen::MatrixXd& cov, int B)
    : n_(static_cast<int>(cov.rows())), B_(B) {
    if (cov.rows() != cov.cols()) throw ContractError("covariance must be square");
    if (B < 0) throw ContractError("truncation bound must be non-negative");
    if (n_ == 0) throw ContractError("wrapped Gaussian needs at least one coordinate");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < n_; ++i) {
        if (!(L(i, i) > 0.0)) throw DomainError("covariance is not positive definite");
        log_det += 2.0 * std::log(L(i, i));
    }
    precision_ = llt.solve(Eigen::MatrixXd::Identity(n_, n_));
    precision_ = 0.5 * (precision_ + precision_.transpose());
    log_norm_ = -0.5 * n_ * kLog2Pi - 0.5 * log_det;

    const std::size_t side = 2 * static_cast<std::size_t>(B) + 1;
    std::size_t count = 1;
    for (int i = 0; i < n_; ++i) {
        count *= side;
        if (count > kMaxShifts) throw ContractError("lattice truncation box too large");
    }
    shifts_.resize(n_, static_cast<Eigen::Index>(count));
    shift_quad_.resize(static_cast<Eigen::Index>(count));
    for (std::size_t s = 0; s < count; ++s) {
        std::size_t rem = s;
        for (int i = 0; i < n_; ++i) {
            shifts_(i, static_cast<Eigen::Index>(s)) = static_cast<double>(rem % side) - B;
            rem /= side;
        }
        const auto l = shifts_.col(static_cast<Eigen::Index>(s));
        shift_quad_[static_cast<Eigen::Index>(s)] = l.dot(precision_ * l);
    }
}

void WrappedGaussianKernel::log_shift_terms(std::span<const double> centered_offset,
                                            std::span<double> out) const {
    const int n = n_;
    double buf[32];
    std::vector<double> heap;
    double* pd = buf;
    if (n > 32) {
        heap.resize(static_cast<std::size_t>(n));
        pd = heap.data();
    }
    const double* P = precision_.data();
    const double* d = centered_offset.data();
    double dpd = 0.0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += P[i + j * n] * d[j];
        pd[i] = acc;
        dpd += d[i] * acc;
    }
    const double* L = shifts_.data();
    const auto S = shift_quad_.size();
    for (Eigen::Index s = 0; s < S; ++s) {
        const double* l = L + s * n;
        double cross = 0.0;
        for (int i = 0; i < n; ++i) cross += l[i] * pd[i];
        out[static_cast<std::size_t>(s)] = -0.5 * (dpd + 2.0 * cross + shift_quad_[s]);
    }
}

double WrappedGaussianKernel::log_pdf_centered(std::span<const double> centered_offset) const {
    const std::size_t S = num_shifts();
    double buf[128];
    std::vector<double> heap;
    double* terms = buf;
    if (S > 128) {
        heap.resize(S);
        terms = heap.data();
    }
    log_shift_terms(centered_offset, {terms, S});
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < S; ++s) m = std::max(m, terms[s]);
    double sum = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        if (m - terms[s] < kNegligible) sum += std::exp(terms[s] - m);
    return log_norm_ + m + std::log(sum);
}

double log_wrapped_normal_1d(double centered_offset, double var, int B) {
    if (!(var > 0.0)) throw DomainError("variance must be strictly positive");
    // the l = 0 term dominates because the offset is centered
    const double inv = 0.5 / var;
    double s = 0.0;
    const double m = -centered_offset * centered_offset * inv;
    for (int l = -B; l <= B; ++l) {
        const double z = centered_offset + l;
        const double t = -z * z * inv;
        if (m - t < kNegligible) s += std::exp(t - m);
    }
    return -0.5 * (kLog2Pi + std::log(var)) + m + std::log(s);
}

namespace {

void check_lengths(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, Eigen::Index n) {
    if (x.size() != n || mean.size() != n)
        throw ContractError("dimension mismatch between point, mean and parameters");
}

}  // namespace

double log_wrapped_normal_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov, int B) {
    if (cov.rows() != cov.cols()) throw ContractError("covariance must be square");
    check_lengths(x, mean, cov.rows());
    WrappedGaussianKernel kernel(cov, B);
    std::vector<double> d(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) d[static_cast<std::size_t>(i)] = centered(x[i] - mean[i]);
    return kernel.log_pdf_centered(d);
}

double wrapped_normal_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov, int B) {
    return std::exp(log_wrapped_normal_pdf(x, mean, cov, B));
}

double wrapped_normal_pdf_diag(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& var, int B) {
    check_lengths(x, mean, var.size());
    if (B < 0) throw ContractError("truncation bound must be non-negative");
    double lp = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        lp += log_wrapped_normal_1d(centered(x[i] - mean[i]), var[i], B);
    return std::exp(lp);
}

double log_von_mises_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& kappa) {
    check_lengths(x, mean, kappa.size());
    double lp = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(kappa[i] > 0.0)) throw DomainError("kappa must be strictly positive");
        lp += kappa[i] * std::cos(2.0 * std::numbers::pi * (x[i] - mean[i])) - bessel::log_i0(kappa[i]);
    }
    return lp;
}

double von_mises_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                     const Eigen::VectorXd& kappa) {
    return std::exp(log_von_mises_pdf(x, mean, kappa));
}

ComponentDensity::ComponentDensity(const MixtureComponent& component, int B)
    : component_(&component), B_(B) {
    component.validate();
    if (component.family == Family::WrappedFull) kernel_.emplace_back(component.cov, B);
    if (component.family == Family::VonMises) {
        log_i0_.resize(component.kappa.size());
        for (Eigen::Index i = 0; i < component.kappa.size(); ++i)
            log_i0_[i] = bessel::log_i0(component.kappa[i]);
    }
}

double ComponentDensity::log_pdf(const double* x_full) const {
    const auto& c = *component_;
    const std::size_t n = c.u.size();
    double buf[16];
    std::vector<double> heap;
    double* xu = buf;
    if (n > 16) {
        heap.resize(n);
        xu = heap.data();
    }
    for (std::size_t j = 0; j < n; ++j) xu[j] = x_full[c.u[j]];
    return log_pdf_local({xu, n});
}

double ComponentDensity::log_pdf_local(std::span<const double> x_u) const {
    const auto& c = *component_;
    switch (c.family) {
        case Family::Uniform: return 0.0;
        case Family::WrappedFull: {
            const std::size_t n = x_u.size();
            double buf[16];
            std::vector<double> heap;
            double* d = buf;
            if (n > 16) {
                heap.resize(n);
                d = heap.data();
            }
            for (std::size_t j = 0; j < n; ++j)
                d[j] = centered(x_u[j] - c.mean[static_cast<Eigen::Index>(j)]);
            return kernel_.front().log_pdf_centered({d, n});
        }
        case Family::WrappedDiag: {
            double lp = 0.0;
            for (std::size_t j = 0; j < x_u.size(); ++j) {
                const auto i = static_cast<Eigen::Index>(j);
                lp += log_wrapped_normal_1d(centered(x_u[j] - c.mean[i]), c.var[i], B_);
            }
            return lp;
        }
        case Family::VonMises: {
            double lp = 0.0;
            for (std::size_t j = 0; j < x_u.size(); ++j) {
                const auto i = static_cast<Eigen::Index>(j);
                lp += c.kappa[i] * std::cos(2.0 * std::numbers::pi * (x_u[j] - c.mean[i])) - log_i0_[i];
            }
            return lp;
        }
    }
    return 0.0;
}

double ComponentDensity::peak() const {
    const auto& c = *component_;
    if (c.family == Family::Uniform) return 1.0;
    std::vector<double> m(c.mean.data(), c.mean.data() + c.mean.size());
    return std::exp(log_pdf_local(m));
}

MixtureEvaluator::MixtureEvaluator(const SparseMixtureModel& model) : model_(&model) {
    densities_.reserve(model.size());
    log_alpha_.resize(static_cast<Eigen::Index>(model.size()));
    for (std::size_t k = 0; k < model.size(); ++k) {
        densities_.emplace_back(model.components()[k], model.truncation_B());
        log_alpha_[static_cast<Eigen::Index>(k)] = std::log(model.components()[k].alpha);
    }
}

void MixtureEvaluator::log_joint(const double* x_full, std::span<double> out) const {
    for (std::size_t k = 0; k < densities_.size(); ++k) {
        const double la = log_alpha_[static_cast<Eigen::Index>(k)];
        out[k] = std::isfinite(la) ? la + densities_[k].log_pdf(x_full)
                                   : -std::numeric_limits<double>::infinity();
    }
}

double MixtureEvaluator::log_pdf(const double* x_full) const {
    double buf[64];
    std::vector<double> heap;
    double* terms = buf;
    if (densities_.size() > 64) {
        heap.resize(densities_.size());
        terms = heap.data();
    }
    log_joint(x_full, {terms, densities_.size()});
    return log_sum_exp({terms, densities_.size()});
}

double MixtureEvaluator::pdf(const double* x_full) const {
    return std::exp(log_pdf(x_full));
}

}  // namespace spamm

#include "spamm/types.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>

namespace spamm {

TorusPoint::TorusPoint(Eigen::VectorXd coords) : coords_(std::move(coords)) {
    for (Eigen::Index i = 0; i < coords_.size(); ++i) {
        if (!std::isfinite(coords_[i])) throw ContractError("TorusPoint: non-finite coordinate");
        coords_[i] = wrap01(coords_[i]);
    }
}

namespace {

void check_points(Eigen::MatrixXd& points, bool wrap) {
    for (Eigen::Index n = 0; n < points.cols(); ++n) {
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            double& x = points(i, n);
            if (!std::isfinite(x)) {
                std::ostringstream msg;
                msg << "sample " << n << ", coordinate " << i << ": non-finite value";
                throw ContractError(msg.str());
            }
            if (wrap) {
                x = wrap01(x);
            } else if (x < 0.0 || x >= 1.0) {
                std::ostringstream msg;
                msg << "sample " << n << ", coordinate " << i << ": value " << x
                    << " outside [0,1)";
                throw ContractError(msg.str());
            }
        }
    }
}

void check_weights(const Eigen::VectorXd& w, Eigen::Index n) {
    if (w.size() != n) throw ContractError("weights length does not match number of points");
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
            throw ContractError("weights must be finite and non-negative");
    }
    if (n > 0 && !(w.sum() > 0.0)) throw ContractError("weights must have positive sum");
}

}  // namespace

WeightedSampleSet::WeightedSampleSet(Eigen::MatrixXd points, Eigen::VectorXd weights, bool wrap)
    : points_(std::move(points)), weights_(std::move(weights)) {
    check_points(points_, wrap);
    check_weights(weights_, points_.cols());
}

WeightedSampleSet::WeightedSampleSet(Eigen::MatrixXd points, bool wrap)
    : points_(std::move(points)) {
    check_points(points_, wrap);
    weights_ = Eigen::VectorXd::Ones(points_.cols());
}

WeightedSampleSet WeightedSampleSet::reweighted(Eigen::VectorXd weights) const {
    check_weights(weights, size());
    WeightedSampleSet out;
    out.points_ = points_;
    out.weights_ = std::move(weights);
    return out;
}

WeightedSampleSet WeightedSampleSet::project(const IndexSet& dims) const {
    WeightedSampleSet out;
    out.points_.resize(static_cast<Eigen::Index>(dims.size()), size());
    for (std::size_t j = 0; j < dims.size(); ++j) {
        if (dims[j] < 0 || dims[j] >= dim()) throw ContractError("project: index out of range");
        out.points_.row(static_cast<Eigen::Index>(j)) = points_.row(dims[j]);
    }
    out.weights_ = weights_;
    return out;
}

WeightedSampleSet WeightedSampleSet::compressed(double threshold) const {
    Eigen::Index kept = 0;
    for (Eigen::Index n = 0; n < size(); ++n) kept += weights_[n] > threshold;
    WeightedSampleSet out;
    out.points_.resize(dim(), kept);
    out.weights_.resize(kept);
    Eigen::Index j = 0;
    for (Eigen::Index n = 0; n < size(); ++n) {
        if (weights_[n] > threshold) {
            out.points_.col(j) = points_.col(n);
            out.weights_[j] = weights_[n];
            ++j;
        }
    }
    return out;
}

std::string_view family_name(Family f) {
    switch (f) {
        case Family::WrappedFull: return "wrapped_full";
        case Family::WrappedDiag: return "wrapped_diag";
        case Family::VonMises: return "von_mises";
        case Family::Uniform: return "uniform";
    }
    return "uniform";
}

Family parse_family(std::string_view name) {
    if (name == "wrapped_full" || name == "wrapped") return Family::WrappedFull;
    if (name == "wrapped_diag" || name == "comp_wrapped") return Family::WrappedDiag;
    if (name == "von_mises") return Family::VonMises;
    if (name == "uniform") return Family::Uniform;
    throw ContractError("unknown family '" + std::string(name) + "'");
}

MixtureComponent MixtureComponent::uniform(double alpha) {
    MixtureComponent c;
    c.alpha = alpha;
    c.family = Family::Uniform;
    return c;
}

MixtureComponent MixtureComponent::wrapped_full(IndexSet u, double alpha, Eigen::VectorXd mean,
                                                Eigen::MatrixXd cov) {
    MixtureComponent c;
    c.u = std::move(u);
    c.alpha = alpha;
    c.family = Family::WrappedFull;
    c.mean = std::move(mean);
    c.cov = std::move(cov);
    return c;
}

MixtureComponent MixtureComponent::wrapped_diag(IndexSet u, double alpha, Eigen::VectorXd mean,
                                                Eigen::VectorXd var) {
    MixtureComponent c;
    c.u = std::move(u);
    c.alpha = alpha;
    c.family = Family::WrappedDiag;
    c.mean = std::move(mean);
    c.var = std::move(var);
    return c;
}

MixtureComponent MixtureComponent::von_mises(IndexSet u, double alpha, Eigen::VectorXd mean,
                                             Eigen::VectorXd kappa) {
    MixtureComponent c;
    c.u = std::move(u);
    c.alpha = alpha;
    c.family = Family::VonMises;
    c.mean = std::move(mean);
    c.kappa = std::move(kappa);
    return c;
}

void MixtureComponent::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0 + 1e-12)) throw ContractError("component weight outside [0,1]");
    if (!std::is_sorted(u.begin(), u.end()) ||
        std::adjacent_find(u.begin(), u.end()) != u.end())
        throw ContractError("component index set must be sorted and duplicate-free");
    const auto n = static_cast<Eigen::Index>(u.size());
    if (family == Family::Uniform) {
        if (!u.empty()) throw ContractError("uniform component must have an empty index set");
        return;
    }
    if (u.empty()) throw ContractError("non-uniform component needs a non-empty index set");
    if (mean.size() != n) throw ContractError("mean length does not match index set");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(mean[i] >= 0.0 && mean[i] < 1.0)) throw ContractError("mean must lie in [0,1)");
    switch (family) {
        case Family::WrappedFull: {
            if (cov.rows() != n || cov.cols() != n) throw ContractError("covariance shape mismatch");
            if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
                throw DomainError("covariance is not symmetric");
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
            break;
        }
        case Family::WrappedDiag:
            if (var.size() != n) throw ContractError("variance length does not match index set");
            if (!(var.array() > 0.0).all()) throw DomainError("variances must be strictly positive");
            break;
        case Family::VonMises:
            if (kappa.size() != n) throw ContractError("kappa length does not match index set");
            if (!(kappa.array() > 0.0).all()) throw DomainError("kappa must be strictly positive");
            break;
        case Family::Uniform: break;
    }
}

double MixtureComponent::max_stddev() const {
    switch (family) {
        case Family::WrappedFull: return cov.size() ? std::sqrt(cov.diagonal().maxCoeff()) : 0.0;
        case Family::WrappedDiag: return var.size() ? std::sqrt(var.maxCoeff()) : 0.0;
        default: return 0.0;
    }
}

SparseMixtureModel::SparseMixtureModel(int d, std::vector<MixtureComponent> components,
                                       int truncation_B)
    : d_(d), B_(truncation_B), components_(std::move(components)) {
    validate();
}

Eigen::VectorXd SparseMixtureModel::weights() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t k = 0; k < components_.size(); ++k) w[static_cast<Eigen::Index>(k)] = components_[k].alpha;
    return w;
}

void SparseMixtureModel::validate() const {
    if (d_ < 0) throw ContractError("model dimension must be non-negative");
    if (B_ < 0) throw ContractError("truncation bound must be non-negative");
    if (components_.empty()) throw ContractError("model needs at least one component");
    double total = 0.0;
    int uniforms = 0;
    for (const auto& c : components_) {
        c.validate();
        for (int i : c.u)
            if (i < 0 || i >= d_) throw ContractError("component index outside model dimension");
        total += c.alpha;
        uniforms += c.family == Family::Uniform;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "component weights sum to " << total << ", expected 1";
        throw ContractError(msg.str());
    }
    if (uniforms > 1) throw ContractError("at most one uniform component is allowed");
}

int default_truncation(double sigma_max) {
    return std::max(1, static_cast<int>(std::ceil(3.0 * sigma_max)));
}

IndexSet set_intersection(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

IndexSet set_union(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

IndexSet set_difference(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

bool contains(const IndexSet& a, int i) {
    return std::binary_search(a.begin(), a.end(), i);
}

}  // namespace spamm

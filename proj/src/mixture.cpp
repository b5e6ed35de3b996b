#include "spamm/mixture.hpp"

#include "spamm/linalg.hpp"
#include "spamm/parallel.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace spamm {

namespace {

void check_dim(const SparseMixtureModel& model, Eigen::Index d) {
    if (d != model.dim()) {
        std::ostringstream msg;
        msg << "point dimension " << d << " does not match model dimension " << model.dim();
        throw ContractError(msg.str());
    }
}

}  // namespace

double log_mixture_pdf(const SparseMixtureModel& model, const TorusPoint& x) {
    check_dim(model, x.dim());
    MixtureEvaluator eval(model);
    return eval.log_pdf(x.coords().data());
}

double mixture_pdf(const SparseMixtureModel& model, const TorusPoint& x) {
    return std::exp(log_mixture_pdf(model, x));
}

Eigen::VectorXd log_density_values(const SparseMixtureModel& model, const WeightedSampleSet& samples) {
    check_dim(model, samples.dim());
    MixtureEvaluator eval(model);
    Eigen::VectorXd out(samples.size());
    const auto& pts = samples.points();
    parallel_chunks(samples.size(), kDefaultChunk, [&](std::int64_t b, std::int64_t e, std::int64_t) {
        for (std::int64_t n = b; n < e; ++n) out[n] = eval.log_pdf(pts.col(n).data());
    });
    return out;
}

double log_likelihood(const SparseMixtureModel& model, const WeightedSampleSet& samples) {
    const Eigen::VectorXd lp = log_density_values(model, samples);
    const auto& w = samples.weights();
    double total = 0.0;
    for (Eigen::Index n = 0; n < lp.size(); ++n) {
        if (w[n] == 0.0) continue;
        if (!std::isfinite(lp[n])) return -std::numeric_limits<double>::infinity();
        total += w[n] * lp[n];
    }
    return total;
}

Eigen::VectorXd posterior_responsibilities(const SparseMixtureModel& model, const TorusPoint& x) {
    check_dim(model, x.dim());
    MixtureEvaluator eval(model);
    std::vector<double> lj(model.size());
    eval.log_joint(x.coords().data(), lj);
    const double total = log_sum_exp(lj);
    if (!std::isfinite(total)) throw NumericError("posterior_responsibilities: point has zero density");
    Eigen::VectorXd beta(static_cast<Eigen::Index>(lj.size()));
    for (std::size_t k = 0; k < lj.size(); ++k) beta[static_cast<Eigen::Index>(k)] = std::exp(lj[k] - total);
    return beta / beta.sum();
}

MixtureComponent marginal_component(const MixtureComponent& comp, const IndexSet& v) {
    IndexSet sorted_v = v;
    std::sort(sorted_v.begin(), sorted_v.end());
    const IndexSet xi = set_intersection(comp.u, sorted_v);
    if (xi.empty()) return MixtureComponent::uniform(comp.alpha);
    if (xi.size() == comp.u.size()) return comp;
    const IndexSet pos = positions_in(comp.u, xi);
    switch (comp.family) {
        case Family::WrappedFull:
            return MixtureComponent::wrapped_full(xi, comp.alpha, select(comp.mean, pos),
                                                  select_block(comp.cov, pos, pos));
        case Family::WrappedDiag:
            return MixtureComponent::wrapped_diag(xi, comp.alpha, select(comp.mean, pos), select(comp.var, pos));
        case Family::VonMises:
            return MixtureComponent::von_mises(xi, comp.alpha, select(comp.mean, pos), select(comp.kappa, pos));
        case Family::Uniform: break;
    }
    return MixtureComponent::uniform(comp.alpha);
}

bool components_match(const MixtureComponent& a, const MixtureComponent& b, double tol) {
    if (a.family != b.family || a.u != b.u) return false;
    if (a.family == Family::Uniform) return true;
    for (Eigen::Index i = 0; i < a.mean.size(); ++i)
        if (circular_distance(a.mean[i], b.mean[i]) > tol) return false;
    switch (a.family) {
        case Family::WrappedFull: return (a.cov - b.cov).cwiseAbs().maxCoeff() <= tol;
        case Family::WrappedDiag: return (a.var - b.var).cwiseAbs().maxCoeff() <= tol;
        case Family::VonMises: return (a.kappa - b.kappa).cwiseAbs().maxCoeff() <= tol;
        case Family::Uniform: break;
    }
    return true;
}

std::vector<MixtureComponent> merge_components(std::vector<MixtureComponent> comps, double tol) {
    std::vector<MixtureComponent> out;
    for (auto& c : comps) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const MixtureComponent& o) { return components_match(o, c, tol); });
        if (it == out.end()) out.push_back(std::move(c));
        else it->alpha += c.alpha;
    }
    return out;
}

SparseMixtureModel marginalize_model(const SparseMixtureModel& model, IndexSet v, double merge_tol) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (int i : v)
        if (i < 0 || i >= model.dim()) throw ContractError("marginalize_model: index out of range");
    std::vector<MixtureComponent> comps;
    comps.reserve(model.size());
    for (const auto& c : model.components()) {
        MixtureComponent m = marginal_component(c, v);
        m.u = positions_in(v, m.u);
        comps.push_back(std::move(m));
    }
    comps = merge_components(std::move(comps), merge_tol);
    // keep the simplex exact after summation
    double total = 0.0;
    for (const auto& c : comps) total += c.alpha;
    for (auto& c : comps) c.alpha /= total;
    return SparseMixtureModel(static_cast<int>(v.size()), std::move(comps), model.truncation_B());
}

namespace {

struct ComponentPredictor {
    double constant = 0.5;   // prediction when there is no feature coupling
    bool affine = false;
    IndexSet features;       // global indices of coupled features
    Eigen::VectorXd mean_f;
    Eigen::RowVectorXd gain;  // Sigma_tf Sigma_ff^-1
    double mean_t = 0.5;
    std::vector<WrappedGaussianKernel> kernel;  // over Sigma_ff
};

}  // namespace

Prediction conditional_expectation(const SparseMixtureModel& joint, int target,
                                   const Eigen::VectorXd& features) {
    const int d = joint.dim();
    if (target < 0 || target >= d) throw ContractError("conditional_expectation: target out of range");
    if (features.size() != d - 1) throw ContractError("conditional_expectation: feature length must be d-1");

    Eigen::VectorXd x_full(d);
    for (int i = 0, j = 0; i < d; ++i) x_full[i] = i == target ? 0.0 : wrap01(features[j++]);

    IndexSet feature_dims;
    for (int i = 0; i < d; ++i)
        if (i != target) feature_dims.push_back(i);

    const auto K = joint.size();
    std::vector<double> log_post(K);
    std::vector<ComponentPredictor> preds(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = joint.components()[k];
        const MixtureComponent marg = marginal_component(c, feature_dims);
        ComponentDensity dens(marg, joint.truncation_B());
        log_post[k] = c.alpha > 0.0 ? std::log(c.alpha) + dens.log_pdf(x_full.data())
                                    : -std::numeric_limits<double>::infinity();

        auto& p = preds[k];
        if (!contains(c.u, target)) continue;
        const IndexSet pos_t = positions_in(c.u, {target});
        p.mean_t = c.mean[pos_t[0]];
        p.constant = p.mean_t;
        if (c.family != Family::WrappedFull || c.u.size() == 1) continue;
        p.features = set_difference(c.u, {target});
        const IndexSet pos_f = positions_in(c.u, p.features);
        const Eigen::MatrixXd S_ff = select_block(c.cov, pos_f, pos_f);
        const Eigen::MatrixXd S_tf = select_block(c.cov, pos_t, pos_f);
        Eigen::LLT<Eigen::MatrixXd> llt(S_ff);
        if (llt.info() != Eigen::Success) throw NumericError("conditional_expectation: singular feature block");
        p.gain = llt.solve(S_tf.transpose()).transpose();
        p.mean_f = select(c.mean, pos_f);
        p.kernel.emplace_back(S_ff, joint.truncation_B());
        p.affine = true;
    }

    const double total = log_sum_exp(log_post);
    if (!std::isfinite(total)) throw NumericError("conditional_expectation: features have zero density");

    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double a = std::exp(log_post[k] - total);
        if (a == 0.0) continue;
        const auto& p = preds[k];
        double m = p.constant;
        if (p.affine) {
            // most likely winding of the raw feature offsets over [-B,B]^n
            const auto& ker = p.kernel.front();
            const auto nf = static_cast<Eigen::Index>(p.features.size());
            Eigen::VectorXd offset(nf);
            for (Eigen::Index j = 0; j < nf; ++j) offset[j] = x_full[p.features[j]] - p.mean_f[j];
            std::vector<double> terms(ker.num_shifts());
            ker.log_shift_terms({offset.data(), static_cast<std::size_t>(nf)}, terms);
            const auto best = std::max_element(terms.begin(), terms.end()) - terms.begin();
            const Eigen::VectorXd shift = ker.shifts().col(best);
            // back in the image of the raw features: undo the whole turns the shift carries
            m = p.mean_t + p.gain.dot(offset + shift) - std::round(p.gain.dot(shift));
        }
        acc += a * m;
    }
    return {wrap01(acc), acc};
}

}  // namespace spamm

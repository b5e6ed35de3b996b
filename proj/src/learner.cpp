#include "spamm/learner.hpp"

#include "spamm/linalg.hpp"
#include "spamm/mixture.hpp"
#include "spamm/stat_tests.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace spamm {

using nlohmann::json;

void LearnerConfig::validate() const {
    if (!(eps_ks > 0.0) || !(eps_c > 0.0)) throw ContractError("LearnerConfig: thresholds must be positive");
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0)) throw ContractError("LearnerConfig: prox rates must be positive");
    if (k_max < 1) throw ContractError("LearnerConfig: k_max must be at least 1");
    if (B < 0) throw ContractError("LearnerConfig: B must be non-negative");
    if (family == Family::Uniform) throw ContractError("LearnerConfig: family must not be uniform");
    em.validate();
}

json config_to_json(const LearnerConfig& cfg) {
    return json{{"eps_ks", cfg.eps_ks},
                {"eps_c", cfg.eps_c},
                {"gamma1", cfg.gamma1},
                {"gamma2", cfg.gamma2},
                {"k_max", cfg.k_max},
                {"family", std::string(family_name(cfg.family))},
                {"B", cfg.B},
                {"bic_restarts", cfg.bic_restarts},
                {"bic_penalty", cfg.bic_penalty == BicPenalty::LogWeight ? "log_weight" : "printed"},
                {"merge_tol", cfg.merge_tol},
                {"em", {{"max_iters", cfg.em.max_iters}, {"rel_tol", cfg.em.rel_tol}, {"seed", cfg.em.seed}}}};
}

json report_to_json(const ActiveSetReport& r) {
    json ks = json::array();
    for (Eigen::Index i = 0; i < r.ks_per_dim.size(); ++i) ks.push_back(r.ks_per_dim[i]);
    json corr = json::array();
    for (Eigen::Index i = 0; i < r.correlations.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < r.correlations.cols(); ++j) {
            const double v = r.correlations(i, j);
            row.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        }
        corr.push_back(row);
    }
    return json{{"ks_per_dim", ks}, {"correlations", corr}, {"active", r.active}, {"inactive", r.inactive}};
}

ActiveSetReport detect_active_set(const WeightedSampleSet& samples, double eps_ks, double eps_c) {
    if (samples.size() < 2) throw ContractError("detect_active_set: need at least two samples");
    if (!(eps_ks > 0.0) || !(eps_c > 0.0)) throw ContractError("detect_active_set: thresholds must be positive");
    const int d = static_cast<int>(samples.dim());
    ActiveSetReport r;
    r.ks_per_dim.resize(d);
    for (int i = 0; i < d; ++i)
        r.ks_per_dim[i] = ks_uniform_distance(UnivariateWeightedSamples::from_dimension(samples, i)).statistic;
    r.correlations = correlation_matrix(samples);

    std::vector<bool> active(static_cast<std::size_t>(d), false);
    for (int i = 0; i < d; ++i) active[static_cast<std::size_t>(i)] = r.ks_per_dim[i] > eps_ks;
    for (bool changed = true; changed;) {
        changed = false;
        for (int i = 0; i < d; ++i) {
            if (active[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < d; ++j) {
                const double c = r.correlations(i, j);
                if (j != i && active[static_cast<std::size_t>(j)] && std::isfinite(c) && std::abs(c) >= eps_c) {
                    active[static_cast<std::size_t>(i)] = true;
                    changed = true;
                    break;
                }
            }
        }
    }
    for (int i = 0; i < d; ++i) (active[static_cast<std::size_t>(i)] ? r.active : r.inactive).push_back(i);
    std::stable_sort(r.active.begin(), r.active.end(),
                     [&](int a, int b) { return r.ks_per_dim[a] > r.ks_per_dim[b]; });
    return r;
}

namespace {

struct ResidualKs {
    bool degenerate = true;
    double statistic = 0.0;
};

ResidualKs residual_ks(const WeightedSampleSet& samples, const Eigen::VectorXd& resp, int dim) {
    if (resp.size() != samples.size()) throw ContractError("residual test: responsibility length mismatch");
    if (dim < 0 || dim >= samples.dim()) throw ContractError("residual test: dimension out of range");
    const Eigen::VectorXd w = samples.weights().cwiseProduct(resp.cwiseMax(0.0));
    ResidualKs out;
    const double total = w.sum();
    if (!(total > 0.0)) return out;
    if (total * total / w.squaredNorm() < 2.0) return out;
    out.degenerate = false;
    out.statistic = ks_uniform_distance({samples.points().row(dim).transpose(), w}).statistic;
    return out;
}

}  // namespace

bool residual_active_test(const WeightedSampleSet& samples, const Eigen::VectorXd& resp, int dim, double eps_ks) {
    const ResidualKs r = residual_ks(samples, resp, dim);
    if (r.degenerate) {
        spdlog::warn("residual_active_test: degenerate reweighted sample for dimension {}", dim);
        return false;
    }
    return r.statistic > eps_ks;
}

MixtureComponent extend_component(const MixtureComponent& parent, int dim, const MixtureComponent& child) {
    if (contains(parent.u, dim)) throw ContractError("extend_component: dimension already coupled");
    if (child.family == Family::Uniform) throw ContractError("extend_component: child must not be uniform");
    const Family family = child.family;
    if (parent.family != Family::Uniform && parent.family != family)
        throw ContractError("extend_component: family mismatch");
    const IndexSet u = set_union(parent.u, {dim});
    const auto n = static_cast<Eigen::Index>(u.size());
    // position of each new coordinate in the stacked (parent, child) order
    std::vector<Eigen::Index> src(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0, p = 0; j < n; ++j)
        src[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(j)] == dim ? n - 1 : p++;

    const auto m = static_cast<Eigen::Index>(parent.u.size());
    Eigen::VectorXd mean_s(n), diag_s(n);
    if (m > 0) mean_s.head(m) = parent.mean;
    mean_s[n - 1] = child.mean[0];
    Eigen::VectorXd mean(n);
    for (Eigen::Index j = 0; j < n; ++j) mean[j] = mean_s[src[static_cast<std::size_t>(j)]];

    switch (family) {
        case Family::WrappedFull: {
            Eigen::MatrixXd cov_s = Eigen::MatrixXd::Zero(n, n);
            if (m > 0) cov_s.topLeftCorner(m, m) = parent.cov;
            cov_s(n - 1, n - 1) = child.cov(0, 0);
            Eigen::MatrixXd cov(n, n);
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b < n; ++b)
                    cov(a, b) = cov_s(src[static_cast<std::size_t>(a)], src[static_cast<std::size_t>(b)]);
            return MixtureComponent::wrapped_full(u, parent.alpha, mean, cov);
        }
        case Family::WrappedDiag:
        case Family::VonMises: {
            const Eigen::VectorXd& pv = family == Family::WrappedDiag ? parent.var : parent.kappa;
            const Eigen::VectorXd& cv = family == Family::WrappedDiag ? child.var : child.kappa;
            if (m > 0) diag_s.head(m) = pv;
            diag_s[n - 1] = cv[0];
            Eigen::VectorXd v(n);
            for (Eigen::Index j = 0; j < n; ++j) v[j] = diag_s[src[static_cast<std::size_t>(j)]];
            return family == Family::WrappedDiag ? MixtureComponent::wrapped_diag(u, parent.alpha, mean, v)
                                                 : MixtureComponent::von_mises(u, parent.alpha, mean, v);
        }
        case Family::Uniform: break;
    }
    throw ContractError("extend_component: unsupported family");
}

namespace {

std::string u_string(const IndexSet& u) {
    std::ostringstream s;
    s << '{';
    for (std::size_t i = 0; i < u.size(); ++i) s << (i ? "," : "") << u[i];
    s << '}';
    return s.str();
}

void normalise(std::vector<MixtureComponent>& comps) {
    double total = 0.0;
    for (const auto& c : comps) total += c.alpha;
    for (auto& c : comps) c.alpha /= total;
}

}  // namespace

LearnResult learn_sparse_mm(const WeightedSampleSet& samples, const LearnerConfig& cfg) {
    cfg.validate();
    const int d = static_cast<int>(samples.dim());
    LearnResult res;
    res.report = detect_active_set(samples, cfg.eps_ks, cfg.eps_c);
    auto warn = [&](std::string msg) {
        spdlog::warn("{}", msg);
        res.warnings.push_back(std::move(msg));
    };

    std::vector<MixtureComponent> comps{MixtureComponent::uniform(1.0)};
    const double wmax = samples.weights().maxCoeff();

    for (std::size_t step = 0; step < res.report.active.size(); ++step) {
        const int dim = res.report.active[step];
        const SparseMixtureModel current(d, comps, cfg.B);
        const EStep es = e_step(current, samples);

        std::vector<MixtureComponent> fixed, children;
        json extended = json::array();
        for (std::size_t k = 0; k < comps.size(); ++k) {
            const MixtureComponent& parent = comps[k];
            const Eigen::VectorXd resp = es.beta.col(static_cast<Eigen::Index>(k));
            const ResidualKs ks = residual_ks(samples, resp, dim);
            const Eigen::VectorXd w = samples.weights().cwiseProduct(resp);
            const double eff = w.sum() > 0.0 ? w.sum() * w.sum() / w.squaredNorm() : 0.0;
            if (ks.degenerate || eff < cfg.min_effective_n) {
                warn("dimension " + std::to_string(dim) + ": component " + u_string(parent.u) +
                     " has a degenerate reweighted sample set and is carried forward unextended");
                fixed.push_back(parent);
                continue;
            }
            if (ks.statistic <= cfg.eps_ks) {
                fixed.push_back(parent);
                continue;
            }

            const WeightedSampleSet local = samples.reweighted(w).compressed(1e-12 * wmax);
            const UnivariateWeightedSamples uni = UnivariateWeightedSamples::from_dimension(local, dim);
            EmConfig em = cfg.em;
            em.seed = cfg.em.seed * 1000003ULL + static_cast<std::uint64_t>(dim) * 7919ULL + k;
            BicConfig bc;
            bc.restarts = cfg.bic_restarts;
            bc.penalty = cfg.bic_penalty;
            bc.with_uniform = true;
            bc.B = cfg.B;
            const BicResult bic = bic_select(uni, cfg.k_max, cfg.family, em, bc);
            Eigen::MatrixXd pts1(1, local.size());
            pts1.row(0) = uni.values.transpose();
            const WeightedSampleSet set1(pts1, local.weights());
            const SparseMixtureModel fit1 = prox_em_fit(set1, bic.model, ProxConfig{cfg.gamma2}, em);

            std::vector<MixtureComponent> kids;
            for (const auto& c : fit1.components()) {
                MixtureComponent child = c.family == Family::Uniform ? parent : extend_component(parent, dim, c);
                child.alpha = parent.alpha * c.alpha;
                kids.push_back(std::move(child));
            }
            extended.push_back(json{{"component", u_string(parent.u)},
                                    {"ks", ks.statistic},
                                    {"k_opt", bic.k_opt},
                                    {"children", static_cast<int>(kids.size())}});
            children.insert(children.end(), kids.begin(), kids.end());
        }

        if (!children.empty()) {
            if (cfg.family == Family::WrappedFull) {
                const FixedGroupResult fg =
                    fixed_group_em(samples, fixed, children, ProxConfig{cfg.gamma1}, cfg.em, cfg.B);
                if (fg.free_dropped) warn("dimension " + std::to_string(dim) + ": extended group lost all weight");
                comps = fg.model.components();
            } else {
                comps = fixed;
                comps.insert(comps.end(), children.begin(), children.end());
            }
            comps = merge_components(std::move(comps), cfg.merge_tol);
            normalise(comps);
        }

        const SparseMixtureModel after(d, comps, cfg.B);
        json structure = json::array();
        for (const auto& c : comps) structure.push_back(json{{"u", c.u}, {"alpha", c.alpha}});
        res.trace.push_back(json{{"step", step},
                                 {"dimension", dim},
                                 {"extended", extended},
                                 {"components", structure},
                                 {"loglik", log_likelihood(after, samples)}});
    }
    res.model = SparseMixtureModel(d, std::move(comps), cfg.B);
    return res;
}

}  // namespace spamm

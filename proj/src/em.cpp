#include "spamm/em.hpp"

#include "spamm/bessel.hpp"
#include "spamm/densities.hpp"
#include "spamm/parallel.hpp"
#include "spamm/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace spamm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDegenerateMass = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& cov, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() >= floor) return 0.5 * (cov + cov.transpose());
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor);
    Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace

void EmConfig::validate() const {
    if (max_iters < 1) throw ContractError("EmConfig: max_iters must be at least 1");
    if (!(rel_tol > 0.0)) throw ContractError("EmConfig: rel_tol must be positive");
    if (!(cov_floor > 0.0)) throw ContractError("EmConfig: cov_floor must be positive");
    if (!(kappa_min > 0.0 && kappa_max > kappa_min)) throw ContractError("EmConfig: invalid kappa range");
    if (!(min_weight >= 0.0 && min_weight < 1.0)) throw ContractError("EmConfig: min_weight outside [0,1)");
}

EStep e_step(const SparseMixtureModel& model, const WeightedSampleSet& samples) {
    if (samples.dim() != model.dim()) throw ContractError("e_step: sample dimension does not match model");
    MixtureEvaluator eval(model);
    const auto N = samples.size();
    const auto K = static_cast<Eigen::Index>(model.size());
    EStep out;
    out.beta.resize(N, K);
    const std::int64_t n_chunks = (N + kDefaultChunk - 1) / kDefaultChunk;
    std::vector<double> partial(static_cast<std::size_t>(std::max<std::int64_t>(n_chunks, 1)), 0.0);
    std::vector<std::int64_t> bad(partial.size(), -1);
    const auto& pts = samples.points();
    const auto& w = samples.weights();
    parallel_chunks(N, kDefaultChunk, [&](std::int64_t b, std::int64_t e, std::int64_t c) {
        std::vector<double> lj(static_cast<std::size_t>(K));
        double acc = 0.0;
        for (std::int64_t n = b; n < e; ++n) {
            eval.log_joint(pts.col(n).data(), lj);
            const double total = log_sum_exp(lj);
            if (!std::isfinite(total)) {
                if (w[n] > 0.0 && bad[static_cast<std::size_t>(c)] < 0) bad[static_cast<std::size_t>(c)] = n;
                out.beta.row(n).setZero();
                continue;
            }
            for (Eigen::Index k = 0; k < K; ++k) out.beta(n, k) = std::exp(lj[static_cast<std::size_t>(k)] - total);
            acc += w[n] * total;
        }
        partial[static_cast<std::size_t>(c)] = acc;
    });
    for (auto b : bad) {
        if (b >= 0) {
            std::ostringstream msg;
            msg << "sample " << b << " has zero density under every component";
            throw NumericError(msg.str());
        }
    }
    out.loglik = 0.0;
    for (double p : partial) out.loglik += p;
    return out;
}

WrappedUpdate m_step_wrapped(const WeightedSampleSet& samples, const Eigen::VectorXd& resp,
                             const MixtureComponent& current, int B, double cov_floor) {
    if (current.family != Family::WrappedFull && current.family != Family::WrappedDiag)
        throw ContractError("m_step_wrapped: component is not a wrapped Gaussian");
    if (resp.size() != samples.size()) throw ContractError("m_step_wrapped: responsibility length mismatch");
    const auto n = static_cast<Eigen::Index>(current.u.size());
    const bool full = current.family == Family::WrappedFull;
    const auto N = samples.size();
    const auto& pts = samples.points();
    const auto& w = samples.weights();

    std::vector<WrappedGaussianKernel> kernel;
    if (full) kernel.emplace_back(current.cov, B);

    const std::int64_t n_chunks = std::max<std::int64_t>(1, (N + kDefaultChunk - 1) / kDefaultChunk);
    struct Acc {
        double mass = 0.0;
        Eigen::VectorXd m1;
        Eigen::MatrixXd m2;
    };
    std::vector<Acc> parts(static_cast<std::size_t>(n_chunks));
    for (auto& a : parts) {
        a.m1 = Eigen::VectorXd::Zero(n);
        a.m2 = Eigen::MatrixXd::Zero(n, full ? n : 1);
    }

    parallel_chunks(N, kDefaultChunk, [&](std::int64_t b, std::int64_t e, std::int64_t c) {
        Acc& acc = parts[static_cast<std::size_t>(c)];
        std::vector<double> d(static_cast<std::size_t>(n));
        std::vector<double> terms(full ? kernel.front().num_shifts() : 0);
        Eigen::VectorXd y(n);
        for (std::int64_t s = b; s < e; ++s) {
            const double r = w[s] * resp[s];
            if (!(r > 0.0)) continue;
            acc.mass += r;
            for (Eigen::Index i = 0; i < n; ++i)
                d[static_cast<std::size_t>(i)] = centered(pts(current.u[static_cast<std::size_t>(i)], s) - current.mean[i]);
            if (full) {
                const auto& ker = kernel.front();
                ker.log_shift_terms(d, terms);
                const double m = *std::max_element(terms.begin(), terms.end());
                double z = 0.0;
                for (double& t : terms) {
                    t = m - t < 40.0 ? std::exp(t - m) : 0.0;
                    z += t;
                }
                for (std::size_t l = 0; l < terms.size(); ++l) {
                    if (terms[l] == 0.0) continue;
                    const double p = r * terms[l] / z;
                    for (Eigen::Index i = 0; i < n; ++i)
                        y[i] = d[static_cast<std::size_t>(i)] + ker.shifts()(i, static_cast<Eigen::Index>(l));
                    acc.m1.noalias() += p * y;
                    acc.m2.noalias() += p * y * y.transpose();
                }
            } else {
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double di = d[static_cast<std::size_t>(i)];
                    const double inv = 0.5 / current.var[i];
                    const double top = -di * di * inv;
                    double z = 0.0, s1 = 0.0, s2 = 0.0;
                    for (int l = -B; l <= B; ++l) {
                        const double yy = di + l;
                        const double t = -yy * yy * inv;
                        if (top - t >= 40.0) continue;
                        const double p = std::exp(t - top);
                        z += p;
                        s1 += p * yy;
                        s2 += p * yy * yy;
                    }
                    acc.m1[i] += r * s1 / z;
                    acc.m2(i, 0) += r * s2 / z;
                }
            }
        }
    });

    WrappedUpdate up;
    Acc tot{0.0, Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, full ? n : 1)};
    for (const auto& a : parts) {
        tot.mass += a.mass;
        tot.m1 += a.m1;
        tot.m2 += a.m2;
    }
    up.mass = tot.mass;
    if (!(tot.mass >= kDegenerateMass)) {
        up.degenerate = true;
        up.mean = current.mean;
        up.cov = full ? current.cov : Eigen::MatrixXd(current.var.asDiagonal());
        return up;
    }
    const Eigen::VectorXd shift = tot.m1 / tot.mass;
    up.mean.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) up.mean[i] = wrap01(current.mean[i] + shift[i]);
    if (full) {
        up.cov = floor_eigenvalues(tot.m2 / tot.mass - shift * shift.transpose(), cov_floor);
    } else {
        up.cov = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            up.cov(i, i) = std::max(tot.m2(i, 0) / tot.mass - shift[i] * shift[i], cov_floor);
    }
    return up;
}

VonMisesUpdate m_step_von_mises(const WeightedSampleSet& samples, const Eigen::VectorXd& resp,
                                const IndexSet& u, double kappa_min, double kappa_max) {
    if (resp.size() != samples.size()) throw ContractError("m_step_von_mises: responsibility length mismatch");
    const auto n = static_cast<Eigen::Index>(u.size());
    const auto N = samples.size();
    const auto& pts = samples.points();
    const auto& w = samples.weights();
    const std::int64_t n_chunks = std::max<std::int64_t>(1, (N + kDefaultChunk - 1) / kDefaultChunk);
    std::vector<Eigen::VectorXd> C(static_cast<std::size_t>(n_chunks), Eigen::VectorXd::Zero(n));
    std::vector<Eigen::VectorXd> S(static_cast<std::size_t>(n_chunks), Eigen::VectorXd::Zero(n));
    std::vector<double> mass(static_cast<std::size_t>(n_chunks), 0.0);
    parallel_chunks(N, kDefaultChunk, [&](std::int64_t b, std::int64_t e, std::int64_t c) {
        auto& cc = C[static_cast<std::size_t>(c)];
        auto& ss = S[static_cast<std::size_t>(c)];
        for (std::int64_t s = b; s < e; ++s) {
            const double r = w[s] * resp[s];
            if (!(r > 0.0)) continue;
            mass[static_cast<std::size_t>(c)] += r;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double a = kTwoPi * pts(u[static_cast<std::size_t>(i)], s);
                cc[i] += r * std::cos(a);
                ss[i] += r * std::sin(a);
            }
        }
    });
    VonMisesUpdate up;
    Eigen::VectorXd Ct = Eigen::VectorXd::Zero(n), St = Eigen::VectorXd::Zero(n);
    for (std::size_t c = 0; c < C.size(); ++c) {
        Ct += C[c];
        St += S[c];
        up.mass += mass[c];
    }
    up.mean = Eigen::VectorXd::Constant(n, 0.5);
    up.kappa = Eigen::VectorXd::Constant(n, kappa_min);
    if (!(up.mass >= kDegenerateMass)) {
        up.degenerate = true;
        return up;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double R = std::min(1.0, std::hypot(Ct[i], St[i]) / up.mass);
        if (R > 1e-12) up.mean[i] = wrap01(std::atan2(St[i], Ct[i]) / kTwoPi);
        up.kappa[i] = bessel::inverse_ratio(R, kappa_min, kappa_max);
    }
    return up;
}

ProxResult prox_l0_simplex(const Eigen::VectorXd& alpha, double gamma) {
    if (!(gamma > 0.0)) throw ContractError("prox_l0_simplex: gamma must be positive");
    const auto K = alpha.size();
    if (K == 0) throw ContractError("prox_l0_simplex: empty weight vector");
    for (Eigen::Index k = 0; k < K; ++k)
        if (!(alpha[k] >= 0.0)) throw ContractError("prox_l0_simplex: weights must be non-negative");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return alpha[a] < alpha[b]; });

    Eigen::Index best_m = 0;
    double best = std::numeric_limits<double>::infinity();
    double s = 0.0, sq = 0.0;
    for (Eigen::Index m = 0; m < K; ++m) {
        const double cost = (s * s / static_cast<double>(K - m) + sq) / (2.0 * gamma) - static_cast<double>(m);
        if (cost < best) {
            best = cost;
            best_m = m;
        }
        const double a = alpha[order[static_cast<std::size_t>(m)]];
        s += a;
        sq += a * a;
    }
    double dropped = 0.0;
    for (Eigen::Index m = 0; m < best_m; ++m) dropped += alpha[order[static_cast<std::size_t>(m)]];
    const double share = dropped / static_cast<double>(K - best_m);

    ProxResult r;
    r.alpha = Eigen::VectorXd::Zero(K);
    for (Eigen::Index m = best_m; m < K; ++m) {
        const auto k = order[static_cast<std::size_t>(m)];
        r.alpha[k] = alpha[k] + share;
        r.kept.push_back(static_cast<int>(k));
    }
    std::sort(r.kept.begin(), r.kept.end());
    return r;
}

namespace {

// Weighted sufficient statistics of one component over a sample set.
// Wrapped: m1 = sum r E[y], m2 = sum r E[y y^T] (upper triangle, row major)
// with y the unwrapped offset from the current mean. Diagonal wrapped: m2
// holds the n second moments. Von Mises: m1/m2 = weighted cos/sin sums.
struct CompStats {
    double mass = 0.0;
    std::vector<double> m1, m2;
};

struct Pass {
    double loglik = 0.0;
    std::vector<CompStats> stats;
};

CompStats empty_stats(const MixtureComponent& c) {
    const std::size_t n = c.u.size();
    CompStats s;
    s.m1.assign(n, 0.0);
    s.m2.assign(c.family == Family::WrappedFull ? n * n : n, 0.0);
    return s;
}

// One sweep over the samples: log-likelihood of `model`, its
// responsibilities and, from them, the statistics of the next M-step.
// Shift posteriors are shared between the density and the moments.
Pass fused_pass(const SparseMixtureModel& model, const WeightedSampleSet& samples) {
    const MixtureEvaluator eval(model);
    const auto& comps = model.components();
    const std::size_t K = comps.size();
    const int B = model.truncation_B();
    const auto N = samples.size();
    const auto& pts = samples.points();
    const auto& w = samples.weights();

    std::vector<double> log_alpha(K);
    std::vector<std::size_t> d_off(K + 1, 0), t_off(K + 1, 0);
    for (std::size_t k = 0; k < K; ++k) {
        log_alpha[k] = std::log(comps[k].alpha);
        const std::size_t n = comps[k].u.size();
        std::size_t t = 0;
        if (comps[k].family == Family::WrappedFull) t = eval.density(k).kernel()->num_shifts();
        if (comps[k].family == Family::WrappedDiag) t = 2 * n;
        d_off[k + 1] = d_off[k] + n;
        t_off[k + 1] = t_off[k] + t;
    }

    const std::int64_t n_chunks = std::max<std::int64_t>(1, (N + kDefaultChunk - 1) / kDefaultChunk);
    std::vector<Pass> parts(static_cast<std::size_t>(n_chunks));
    std::vector<std::int64_t> bad(parts.size(), -1);
    parallel_chunks(N, kDefaultChunk, [&](std::int64_t b, std::int64_t e, std::int64_t c) {
        Pass& part = parts[static_cast<std::size_t>(c)];
        for (const auto& comp : comps) part.stats.push_back(empty_stats(comp));
        std::vector<double> lj(K), dbuf(d_off[K]), tbuf(t_off[K]), y(16);
        for (std::int64_t s = b; s < e; ++s) {
            const double* x = pts.col(s).data();
            for (std::size_t k = 0; k < K; ++k) {
                if (!std::isfinite(log_alpha[k])) {
                    lj[k] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                const MixtureComponent& comp = comps[k];
                const std::size_t n = comp.u.size();
                double* d = dbuf.data() + d_off[k];
                double* t = tbuf.data() + t_off[k];
                double lp = 0.0;
                switch (comp.family) {
                    case Family::Uniform: break;
                    case Family::WrappedFull: {
                        const WrappedGaussianKernel& ker = *eval.density(k).kernel();
                        for (std::size_t i = 0; i < n; ++i)
                            d[i] = centered(x[comp.u[i]] - comp.mean[static_cast<Eigen::Index>(i)]);
                        const std::size_t S = ker.num_shifts();
                        ker.log_shift_terms({d, n}, {t, S});
                        double m = -std::numeric_limits<double>::infinity();
                        for (std::size_t l = 0; l < S; ++l) m = std::max(m, t[l]);
                        double z = 0.0;
                        for (std::size_t l = 0; l < S; ++l) {
                            t[l] = m - t[l] < 40.0 ? std::exp(t[l] - m) : 0.0;
                            z += t[l];
                        }
                        for (std::size_t l = 0; l < S; ++l) t[l] /= z;
                        lp = ker.log_norm() + m + std::log(z);
                        break;
                    }
                    case Family::WrappedDiag: {
                        for (std::size_t i = 0; i < n; ++i) {
                            const auto ii = static_cast<Eigen::Index>(i);
                            const double di = centered(x[comp.u[i]] - comp.mean[ii]);
                            const double inv = 0.5 / comp.var[ii];
                            const double top = -di * di * inv;
                            double z = 0.0, s1 = 0.0, s2 = 0.0;
                            for (int l = -B; l <= B; ++l) {
                                const double yy = di + l;
                                const double tt = -yy * yy * inv;
                                if (top - tt >= 40.0) continue;
                                const double p = std::exp(tt - top);
                                z += p;
                                s1 += p * yy;
                                s2 += p * yy * yy;
                            }
                            t[2 * i] = s1 / z;
                            t[2 * i + 1] = s2 / z;
                            lp += -0.5 * (kLog2Pi + std::log(comp.var[ii])) + top + std::log(z);
                        }
                        break;
                    }
                    case Family::VonMises: lp = eval.density(k).log_pdf(x); break;
                }
                lj[k] = log_alpha[k] + lp;
            }
            const double total = log_sum_exp(lj);
            if (!std::isfinite(total)) {
                if (w[s] > 0.0 && bad[static_cast<std::size_t>(c)] < 0) bad[static_cast<std::size_t>(c)] = s;
                continue;
            }
            part.loglik += w[s] * total;
            for (std::size_t k = 0; k < K; ++k) {
                const double r = w[s] * std::exp(lj[k] - total);
                if (!(r > 0.0)) continue;
                const MixtureComponent& comp = comps[k];
                CompStats& st = part.stats[k];
                st.mass += r;
                const std::size_t n = comp.u.size();
                const double* d = dbuf.data() + d_off[k];
                const double* t = tbuf.data() + t_off[k];
                switch (comp.family) {
                    case Family::Uniform: break;
                    case Family::WrappedFull: {
                        const WrappedGaussianKernel& ker = *eval.density(k).kernel();
                        const double* L = ker.shifts().data();
                        if (y.size() < n) y.resize(n);
                        for (std::size_t l = 0; l < ker.num_shifts(); ++l) {
                            if (t[l] == 0.0) continue;
                            const double p = r * t[l];
                            for (std::size_t i = 0; i < n; ++i) y[i] = d[i] + L[l * n + i];
                            for (std::size_t i = 0; i < n; ++i) {
                                st.m1[i] += p * y[i];
                                const double pyi = p * y[i];
                                for (std::size_t j = i; j < n; ++j) st.m2[i * n + j] += pyi * y[j];
                            }
                        }
                        break;
                    }
                    case Family::WrappedDiag:
                        for (std::size_t i = 0; i < n; ++i) {
                            st.m1[i] += r * t[2 * i];
                            st.m2[i] += r * t[2 * i + 1];
                        }
                        break;
                    case Family::VonMises:
                        for (std::size_t i = 0; i < n; ++i) {
                            const double a = kTwoPi * x[comp.u[i]];
                            st.m1[i] += r * std::cos(a);
                            st.m2[i] += r * std::sin(a);
                        }
                        break;
                }
            }
        }
    });
    for (auto b : bad) {
        if (b >= 0) {
            std::ostringstream msg;
            msg << "sample " << b << " has zero density under every component";
            throw NumericError(msg.str());
        }
    }
    Pass out;
    for (const auto& comp : comps) out.stats.push_back(empty_stats(comp));
    for (const auto& part : parts) {
        out.loglik += part.loglik;
        if (part.stats.empty()) continue;
        for (std::size_t k = 0; k < K; ++k) {
            CompStats& dst = out.stats[k];
            const CompStats& src = part.stats[k];
            dst.mass += src.mass;
            for (std::size_t i = 0; i < dst.m1.size(); ++i) dst.m1[i] += src.m1[i];
            for (std::size_t i = 0; i < dst.m2.size(); ++i) dst.m2[i] += src.m2[i];
        }
    }
    return out;
}

// Parameters of the next iterate from the statistics; false when the
// component has lost its mass.
bool update_component(MixtureComponent& c, const CompStats& st, const EmConfig& cfg) {
    if (!(st.mass >= kDegenerateMass)) return false;
    const auto n = static_cast<Eigen::Index>(c.u.size());
    const auto un = static_cast<std::size_t>(n);
    switch (c.family) {
        case Family::Uniform: break;
        case Family::WrappedFull: {
            Eigen::VectorXd shift(n);
            for (Eigen::Index i = 0; i < n; ++i) shift[i] = st.m1[static_cast<std::size_t>(i)] / st.mass;
            Eigen::MatrixXd cov(n, n);
            for (std::size_t i = 0; i < un; ++i)
                for (std::size_t j = i; j < un; ++j) {
                    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
                    cov(a, b) = cov(b, a) = st.m2[i * un + j] / st.mass - shift[a] * shift[b];
                }
            for (Eigen::Index i = 0; i < n; ++i) c.mean[i] = wrap01(c.mean[i] + shift[i]);
            c.cov = floor_eigenvalues(cov, cfg.cov_floor);
            break;
        }
        case Family::WrappedDiag:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sh = st.m1[static_cast<std::size_t>(i)] / st.mass;
                c.var[i] = std::max(st.m2[static_cast<std::size_t>(i)] / st.mass - sh * sh, cfg.cov_floor);
                c.mean[i] = wrap01(c.mean[i] + sh);
            }
            break;
        case Family::VonMises:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double C = st.m1[static_cast<std::size_t>(i)], S = st.m2[static_cast<std::size_t>(i)];
                const double R = std::min(1.0, std::hypot(C, S) / st.mass);
                c.mean[i] = R > 1e-12 ? wrap01(std::atan2(S, C) / kTwoPi) : 0.5;
                c.kappa[i] = bessel::inverse_ratio(R, cfg.kappa_min, cfg.kappa_max);
            }
            break;
    }
    return true;
}

}  // namespace

EmResult em_fit_traced(const WeightedSampleSet& samples, const SparseMixtureModel& init, const EmConfig& cfg,
                       const std::optional<ProxConfig>& prox) {
    cfg.validate();
    if (prox && !(prox->gamma > 0.0)) throw ContractError("ProxConfig: gamma must be positive");
    if (samples.dim() != init.dim()) throw ContractError("em_fit: sample dimension does not match model");
    const int d = init.dim();
    const int B = init.truncation_B();
    const double W = samples.total_weight();

    EmResult res;
    res.model = init;
    res.origin.resize(init.size());
    std::iota(res.origin.begin(), res.origin.end(), std::size_t{0});
    Pass pass = fused_pass(res.model, samples);
    res.loglik.push_back(pass.loglik);

    for (int it = 0; it < cfg.max_iters; ++it) {
        const auto& old = res.model.components();
        std::vector<MixtureComponent> next;
        std::vector<std::size_t> origin;
        next.reserve(old.size());
        for (std::size_t k = 0; k < old.size(); ++k) {
            MixtureComponent c = old[k];
            if (!update_component(c, pass.stats[k], cfg)) continue;
            c.alpha = pass.stats[k].mass / W;
            if (c.alpha < cfg.min_weight) continue;
            next.push_back(std::move(c));
            origin.push_back(res.origin[k]);
        }
        if (next.empty()) throw NumericError("em_fit: every component was eliminated");
        double total = 0.0;
        for (const auto& c : next) total += c.alpha;
        for (auto& c : next) c.alpha /= total;

        if (prox) {
            Eigen::VectorXd a(static_cast<Eigen::Index>(next.size()));
            for (std::size_t k = 0; k < next.size(); ++k) a[static_cast<Eigen::Index>(k)] = next[k].alpha;
            const ProxResult pr = prox_l0_simplex(a, prox->gamma);
            std::vector<MixtureComponent> kept;
            std::vector<std::size_t> kept_origin;
            for (int k : pr.kept) {
                next[static_cast<std::size_t>(k)].alpha = pr.alpha[k];
                kept.push_back(std::move(next[static_cast<std::size_t>(k)]));
                kept_origin.push_back(origin[static_cast<std::size_t>(k)]);
            }
            next = std::move(kept);
            origin = std::move(kept_origin);
        }

        const bool same_structure = next.size() == res.model.size();
        const double ll_old = res.loglik.back();
        res.model = SparseMixtureModel(d, std::move(next), B);
        res.origin = std::move(origin);
        pass = fused_pass(res.model, samples);
        res.loglik.push_back(pass.loglik);
        res.iterations = it + 1;
        if (same_structure && pass.loglik - ll_old < cfg.rel_tol * std::abs(ll_old)) {
            res.converged = true;
            break;
        }
    }
    spdlog::debug("em_fit: n={} K={}->{} iterations={} converged={}", samples.size(), init.size(), res.model.size(),
                  res.iterations, res.converged);
    return res;
}

SparseMixtureModel em_fit(const WeightedSampleSet& samples, const SparseMixtureModel& init, const EmConfig& cfg) {
    return em_fit_traced(samples, init, cfg).model;
}

SparseMixtureModel prox_em_fit(const WeightedSampleSet& samples, const SparseMixtureModel& init,
                               const ProxConfig& prox, const EmConfig& cfg) {
    return em_fit_traced(samples, init, cfg, prox).model;
}

FixedGroupResult fixed_group_em(const WeightedSampleSet& samples, const std::vector<MixtureComponent>& fixed,
                                const std::vector<MixtureComponent>& free_init,
                                const std::optional<ProxConfig>& prox, const EmConfig& cfg, int B) {
    const int d = static_cast<int>(samples.dim());
    FixedGroupResult res;
    res.n_fixed = fixed.size();
    std::vector<MixtureComponent> all = fixed;
    all.insert(all.end(), free_init.begin(), free_init.end());
    res.model = SparseMixtureModel(d, all, B);
    if (free_init.empty()) return res;

    double alpha_free = 0.0;
    for (const auto& c : free_init) alpha_free += c.alpha;
    if (!(alpha_free > 0.0)) {
        spdlog::warn("fixed_group_em: free group has zero weight, dropping {} free components", free_init.size());
        res.model = SparseMixtureModel(d, fixed, B);
        res.free_dropped = true;
        return res;
    }

    // beta_{n,G2} from the initial parameters
    const EStep es = e_step(res.model, samples);
    Eigen::VectorXd w = samples.weights();
    const auto nf = static_cast<Eigen::Index>(fixed.size());
    for (Eigen::Index n = 0; n < w.size(); ++n)
        w[n] *= es.beta.row(n).segment(nf, static_cast<Eigen::Index>(free_init.size())).sum();
    if (!(w.sum() > 0.0)) {
        spdlog::warn("fixed_group_em: free group has no posterior mass, dropping {} free components",
                     free_init.size());
        std::vector<MixtureComponent> kept = fixed;
        for (auto& c : kept) c.alpha /= (1.0 - alpha_free);
        res.model = SparseMixtureModel(d, kept, B);
        res.free_dropped = true;
        return res;
    }
    const double wmax = w.maxCoeff();
    const WeightedSampleSet group = samples.reweighted(w).compressed(1e-12 * wmax);

    std::vector<MixtureComponent> free_norm = free_init;
    double total = 0.0;
    for (auto& c : free_norm) total += c.alpha;
    for (auto& c : free_norm) c.alpha /= total;
    const EmResult fit = em_fit_traced(group, SparseMixtureModel(d, free_norm, B), cfg, prox);

    std::vector<MixtureComponent> out = fixed;
    for (auto c : fit.model.components()) {
        c.alpha *= alpha_free;
        out.push_back(std::move(c));
    }
    res.model = SparseMixtureModel(d, std::move(out), B);
    return res;
}

int bic_parameter_count(const SparseMixtureModel& model) {
    int k = 0;
    bool uniform = false;
    for (const auto& c : model.components()) {
        if (c.family == Family::Uniform) uniform = true;
        else ++k;
    }
    if (k == 0) return 0;
    return 3 * k - 1 + (uniform ? 1 : 0);
}

namespace {

MixtureComponent univariate(Family family, double alpha, double mean, double var) {
    Eigen::VectorXd m(1);
    m[0] = mean;
    switch (family) {
        case Family::WrappedFull: return MixtureComponent::wrapped_full({0}, alpha, m, Eigen::MatrixXd::Constant(1, 1, var));
        case Family::WrappedDiag: return MixtureComponent::wrapped_diag({0}, alpha, m, Eigen::VectorXd::Constant(1, var));
        case Family::VonMises:
            return MixtureComponent::von_mises({0}, alpha, m, Eigen::VectorXd::Constant(1, 1.0 / (kTwoPi * kTwoPi * var)));
        case Family::Uniform: break;
    }
    throw ContractError("bic_select: family must not be uniform");
}

}  // namespace

BicResult bic_select(const UnivariateWeightedSamples& samples, int k_max, Family family, const EmConfig& cfg,
                     const BicConfig& bic) {
    if (k_max < 1) throw ContractError("bic_select: k_max must be at least 1");
    if (bic.restarts < 1) throw ContractError("bic_select: restarts must be at least 1");
    if (family == Family::Uniform) throw ContractError("bic_select: family must not be uniform");
    const auto N = samples.size();
    Eigen::MatrixXd pts(1, N);
    pts.row(0) = samples.values.transpose();
    const WeightedSampleSet set(pts, samples.weights);
    const double W = set.total_weight();

    // circular spread of the data sets the initial width
    double C = 0.0, S = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
        C += samples.weights[n] * std::cos(kTwoPi * samples.values[n]);
        S += samples.weights[n] * std::sin(kTwoPi * samples.values[n]);
    }
    const double R = std::hypot(C, S) / W;
    const double spread = R > 1e-12 ? -2.0 * std::log(R) / (kTwoPi * kTwoPi) : 1.0 / 12.0;

    std::vector<double> cum(static_cast<std::size_t>(N));
    std::partial_sum(samples.weights.begin(), samples.weights.end(), cum.begin());

    BicResult out;
    out.bic.assign(static_cast<std::size_t>(k_max), std::numeric_limits<double>::infinity());
    out.loglik.assign(static_cast<std::size_t>(k_max), -std::numeric_limits<double>::infinity());
    double best_bic = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int k = 1; k <= k_max; ++k) {
        const double var0 = std::clamp(spread / k, 1e-4, 0.04);
        std::optional<SparseMixtureModel> best_model;
        double best_ll = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < bic.restarts; ++r) {
            Rng rng(cfg.seed, 1000003ULL * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(r));
            std::vector<MixtureComponent> comps;
            const int parts = k + (bic.with_uniform ? 1 : 0);
            for (int j = 0; j < k; ++j) {
                const double t = rng.uniform() * cum.back();
                auto idx = std::upper_bound(cum.begin(), cum.end(), t) - cum.begin();
                idx = std::min<std::ptrdiff_t>(idx, N - 1);
                comps.push_back(univariate(family, 1.0 / parts, samples.values[idx], var0));
            }
            if (bic.with_uniform) comps.push_back(MixtureComponent::uniform(1.0 / parts));
            double total = 0.0;
            for (const auto& c : comps) total += c.alpha;
            for (auto& c : comps) c.alpha /= total;
            try {
                const EmResult fit = em_fit_traced(set, SparseMixtureModel(1, comps, bic.B), cfg);
                if (fit.loglik.back() > best_ll) {
                    best_ll = fit.loglik.back();
                    best_model = fit.model;
                }
            } catch (const NumericError& e) {
                spdlog::debug("bic_select: restart {} for k={} failed: {}", r, k, e.what());
            }
        }
        if (!best_model) continue;
        any = true;
        const double p = bic_parameter_count(*best_model);
        const double penalty = bic.penalty == BicPenalty::LogWeight ? p * std::log(W) : p;
        const double value = -2.0 * best_ll + penalty;
        out.bic[static_cast<std::size_t>(k - 1)] = value;
        out.loglik[static_cast<std::size_t>(k - 1)] = best_ll;
        if (value < best_bic) {
            best_bic = value;
            out.k_opt = k;
            out.model = *best_model;
        }
    }
    if (!any) throw NumericError("bic_select: every candidate fit failed");
    return out;
}

}  // namespace spamm

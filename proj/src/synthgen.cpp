#include "spamm/synthgen.hpp"

#include "spamm/densities.hpp"
#include "spamm/parallel.hpp"
#include "spamm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spamm {

DensityOracle::DensityOracle(int d, DensityFn f, double bound, std::string name)
    : d_(d), f_(std::move(f)), bound_(bound), name_(std::move(name)) {
    if (d < 1) throw ContractError("DensityOracle: dimension must be positive");
    if (!(bound > 0.0) || !std::isfinite(bound)) throw ContractError("DensityOracle: bound must be finite and positive");
}

DensityOracle DensityOracle::from_model(const SparseMixtureModel& model, std::string name) {
    auto owned = std::make_shared<const SparseMixtureModel>(model);
    auto eval = std::make_shared<const MixtureEvaluator>(*owned);
    double bound = 0.0;
    for (std::size_t k = 0; k < eval->size(); ++k)
        bound += owned->components()[k].alpha * eval->density(k).peak();
    // the truncated lattice sum can exceed its value at the mean by rounding only
    bound *= 1.0 + 1e-9;
    DensityOracle o(model.dim(), [owned, eval](const double* x) { return eval->pdf(x); }, bound, std::move(name));
    o.model_ = owned;
    return o;
}

TestFunction parse_test_function(const std::string& name) {
    if (name == "f1") return TestFunction::F1;
    if (name == "f2") return TestFunction::F2;
    if (name == "f2_alt") return TestFunction::F2Alt;
    if (name == "f3") return TestFunction::F3;
    throw ContractError("unknown test function '" + name + "' (expected f1, f2, f2_alt or f3)");
}

std::string test_function_name(TestFunction id) {
    switch (id) {
        case TestFunction::F1: return "f1";
        case TestFunction::F2: return "f2";
        case TestFunction::F2Alt: return "f2_alt";
        case TestFunction::F3: return "f3";
    }
    return "f1";
}

namespace {

std::vector<MixtureComponent> f1_components(double a1, double a2) {
    const Eigen::MatrixXd I3 = 1e-3 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd I2 = 1e-3 * Eigen::MatrixXd::Identity(2, 2);
    return {MixtureComponent::wrapped_full({0, 1, 8}, a1, Eigen::Vector3d(0.5, 0.5, 0.5), I3),
            MixtureComponent::wrapped_full({0, 14}, a2, Eigen::Vector2d(0.25, 0.25), I2)};
}

}  // namespace

SparseMixtureModel f1_model() { return SparseMixtureModel(15, f1_components(0.7, 0.3), 1); }

SparseMixtureModel f2_model(double mu3) {
    auto comps = f1_components(0.7, 0.2);
    comps.push_back(MixtureComponent::wrapped_full({5}, 0.1, Eigen::VectorXd::Constant(1, mu3),
                                                   Eigen::MatrixXd::Constant(1, 1, 1e-3)));
    return SparseMixtureModel(15, std::move(comps), 1);
}

double bspline(int order, double x) {
    if (order < 1) throw ContractError("bspline: order must be positive");
    const double t = order * wrap01(x);
    // N_m(t) = 1/(m-1)! sum_j (-1)^j C(m,j) (t-j)_+^(m-1)
    double sum = 0.0, binom = 1.0, fact = 1.0;
    for (int j = 1; j < order; ++j) fact *= j;
    for (int j = 0; j <= order; ++j) {
        const double s = t - j;
        if (s > 0.0) sum += ((j % 2) ? -binom : binom) * std::pow(s, order - 1);
        binom = binom * (order - j) / (j + 1);
    }
    return std::max(0.0, order * sum / fact);
}

const std::vector<IndexSet>& f3_couplings() {
    static const std::vector<IndexSet> u{{0, 2, 7}, {1, 4, 5}, {3, 6, 8}};
    return u;
}

double f3_density(const double* x) {
    double s = 0.0;
    for (const auto& u : f3_couplings()) s += bspline(2, x[u[0]]) * bspline(4, x[u[1]]) * bspline(6, x[u[2]]);
    return s / 3.0;
}

double f3_bound() { return bspline(2, 0.5) * bspline(4, 0.5) * bspline(6, 0.5); }

DensityOracle make_test_function(TestFunction id) {
    switch (id) {
        case TestFunction::F1: return DensityOracle::from_model(f1_model(), "f1");
        case TestFunction::F2: return DensityOracle::from_model(f2_model(0.15), "f2");
        case TestFunction::F2Alt: return DensityOracle::from_model(f2_model(0.3), "f2_alt");
        case TestFunction::F3: return DensityOracle(9, f3_density, f3_bound() * (1.0 + 1e-12), "f3");
    }
    throw ContractError("unknown test function");
}

namespace {

constexpr std::int64_t kCandidatesPerChunk = 4096;

}  // namespace

WeightedSampleSet rejection_sample(const DensityOracle& oracle, Eigen::Index n, std::uint64_t seed) {
    if (n < 0) throw ContractError("rejection_sample: n must be non-negative");
    const int d = oracle.dim();
    const double M = oracle.bound();
    Eigen::MatrixXd out(d, n);
    Eigen::Index filled = 0;
    std::int64_t next_chunk = 0;
    std::int64_t candidates = 0;
    const std::int64_t round = std::max<std::int64_t>(8, thread_count());
    while (filled < n) {
        std::vector<std::vector<double>> accepted(static_cast<std::size_t>(round));
        std::vector<int> violated(static_cast<std::size_t>(round), 0);
        parallel_chunks(round, 1, [&](std::int64_t b, std::int64_t, std::int64_t) {
            Rng rng(seed, static_cast<std::uint64_t>(next_chunk + b));
            std::vector<double> x(static_cast<std::size_t>(d));
            auto& acc = accepted[static_cast<std::size_t>(b)];
            for (std::int64_t c = 0; c < kCandidatesPerChunk; ++c) {
                for (auto& xi : x) xi = rng.uniform();
                const double u = rng.uniform();
                const double f = oracle(x.data());
                if (f > M) violated[static_cast<std::size_t>(b)] = 1;
                if (u * M <= f) acc.insert(acc.end(), x.begin(), x.end());
            }
        });
        for (std::int64_t b = 0; b < round && filled < n; ++b) {
            if (violated[static_cast<std::size_t>(b)])
                throw NumericError("rejection_sample: density exceeds the declared bound of " + oracle.name());
            const auto& acc = accepted[static_cast<std::size_t>(b)];
            for (std::size_t i = 0; i + static_cast<std::size_t>(d) <= acc.size() && filled < n; i += static_cast<std::size_t>(d)) {
                for (int j = 0; j < d; ++j) out(j, filled) = acc[i + static_cast<std::size_t>(j)];
                ++filled;
            }
        }
        next_chunk += round;
        candidates += round * kCandidatesPerChunk;
        if (candidates >= (1 << 20) && static_cast<double>(filled) < 1e-6 * static_cast<double>(candidates)) {
            std::ostringstream msg;
            msg << "rejection_sample: acceptance rate below 1e-6 after " << candidates
                << " candidates; supply a tighter bound than " << M;
            throw NumericError(msg.str());
        }
    }
    return WeightedSampleSet(std::move(out));
}

namespace {

constexpr std::int64_t kMcChunk = 8192;

template <class G>
std::vector<double> mc_chunks(int d, Eigen::Index n_mc, std::uint64_t seed, int slots, G&& g) {
    const std::int64_t n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
    std::vector<double> part(static_cast<std::size_t>(n_chunks * slots), 0.0);
    parallel_chunks(n_mc, kMcChunk, [&](std::int64_t b, std::int64_t e, std::int64_t c) {
        Rng rng(seed, static_cast<std::uint64_t>(c));
        std::vector<double> x(static_cast<std::size_t>(d));
        double* acc = part.data() + c * slots;
        for (std::int64_t i = b; i < e; ++i) {
            for (auto& xi : x) xi = rng.uniform();
            g(x.data(), acc);
        }
    });
    std::vector<double> tot(static_cast<std::size_t>(slots), 0.0);
    for (std::int64_t c = 0; c < n_chunks; ++c)
        for (int s = 0; s < slots; ++s) tot[static_cast<std::size_t>(s)] += part[static_cast<std::size_t>(c * slots + s)];
    return tot;
}

double pw(double v, int p) { return p == 1 ? std::abs(v) : std::pow(std::abs(v), p); }

}  // namespace

double mc_norm(const DensityFn& f, int d, int p, Eigen::Index n_mc, std::uint64_t seed) {
    if (n_mc < 1) throw ContractError("mc_norm: n_mc must be at least 1");
    if (p < 1) throw ContractError("mc_norm: p must be at least 1");
    const auto tot = mc_chunks(d, n_mc, seed, 1, [&](const double* x, double* acc) { acc[0] += pw(f(x), p); });
    return tot[0] / static_cast<double>(n_mc);
}

double relative_lp_error(const DensityFn& f_hat, const DensityFn& f, int d, int p, Eigen::Index n_mc,
                         std::uint64_t seed) {
    if (n_mc < 1) throw ContractError("relative_lp_error: n_mc must be at least 1");
    if (p < 1) throw ContractError("relative_lp_error: p must be at least 1");
    const auto tot = mc_chunks(d, n_mc, seed, 2, [&](const double* x, double* acc) {
        const double a = f_hat(x), b = f(x);
        acc[0] += pw(a - b, p);
        acc[1] += pw(b, p);
    });
    if (!(tot[1] > 0.0)) throw NumericError("relative_lp_error: reference norm is zero");
    const double r = tot[0] / tot[1];
    return p == 1 ? r : std::pow(r, 1.0 / p);
}

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size()) throw ContractError("mse: length mismatch");
    if (predictions.size() == 0) throw ContractError("mse: empty input");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

WeightedSampleSet make_linreg_samples(Eigen::Index n, std::uint64_t seed, double noise_sd) {
    if (n < 0) throw ContractError("make_linreg_samples: n must be non-negative");
    Rng rng(seed, 0);
    Eigen::MatrixXd pts(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = wrap01(0.4 + 0.1 * rng.normal());
        pts(0, i) = x;
        pts(1, i) = wrap01(x + 0.1 + noise_sd * rng.normal());
    }
    return WeightedSampleSet(std::move(pts));
}

}  // namespace spamm

#include "spamm/em.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <numeric>

using namespace spamm;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

double normal1(Rng& rng, double mean, double sd) { return wrap01(mean + sd * rng.normal()); }

double von_mises_draw(Rng& rng, double mean, double kappa) {
    for (;;) {
        const double x = rng.uniform();
        if (rng.uniform() < std::exp(kappa * (std::cos(2 * kPi * (x - mean)) - 1.0))) return x;
    }
}

// Penalised objective for a given support, minimised over the face of the simplex.
double prox_objective(const Eigen::VectorXd& alpha, unsigned mask, double gamma) {
    double out_sq = 0.0, out_sum = 0.0;
    int kept = 0;
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        if (mask & (1u << k)) {
            ++kept;
        } else {
            out_sq += alpha[k] * alpha[k];
            out_sum += alpha[k];
        }
    }
    return (out_sq + out_sum * out_sum / kept) / (2.0 * gamma) + kept;
}

double prox_value(const Eigen::VectorXd& alpha, const ProxResult& r, double gamma) {
    unsigned mask = 0;
    for (int k : r.kept) mask |= 1u << k;
    return prox_objective(alpha, mask, gamma);
}

double prox_oracle(const Eigen::VectorXd& alpha, double gamma) {
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << alpha.size()); ++mask) best = std::min(best, prox_objective(alpha, mask, gamma));
    return best;
}

Eigen::VectorXd random_simplex(Rng& rng, int K) {
    Eigen::VectorXd a(K);
    for (auto& x : a) x = -std::log(1.0 - rng.uniform());
    return a / a.sum();
}

MixtureComponent wrapped1(double alpha, double mean, double var, int dim = 0) {
    return MixtureComponent::wrapped_full({dim}, alpha, vec({mean}), Eigen::MatrixXd::Constant(1, 1, var));
}

UnivariateWeightedSamples univariate(const Eigen::VectorXd& v) { return UnivariateWeightedSamples(v); }

}  // namespace

TEST_CASE("EM never decreases the log-likelihood") {
    Rng rng(101);
    int fits = 0;
    for (int t = 0; t < 50; ++t) {
        const int d = 1 + static_cast<int>(rng.below(2));
        const int N = 400;
        Eigen::MatrixXd pts(d, N);
        for (int n = 0; n < N; ++n) {
            const double c = rng.uniform() < 0.5 ? 0.2 : 0.85;
            for (int i = 0; i < d; ++i) pts(i, n) = normal1(rng, c + 0.1 * i, 0.04 + 0.05 * rng.uniform());
        }
        Eigen::VectorXd w(N);
        for (auto& x : w) x = 0.5 + rng.uniform();
        const WeightedSampleSet s(pts, w);

        const int K = 2 + static_cast<int>(rng.below(2));
        const Family fam = std::array{Family::WrappedFull, Family::WrappedDiag, Family::VonMises}[rng.below(3)];
        IndexSet u(static_cast<std::size_t>(d));
        std::iota(u.begin(), u.end(), 0);
        std::vector<MixtureComponent> comps;
        const Eigen::VectorXd a = random_simplex(rng, K) * 0.9;
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd m(d);
            for (auto& x : m) x = rng.uniform();
            if (fam == Family::WrappedFull)
                comps.push_back(MixtureComponent::wrapped_full(u, a[k], m, testing::random_spd(rng, d, 0.01)));
            else if (fam == Family::WrappedDiag)
                comps.push_back(MixtureComponent::wrapped_diag(u, a[k], m, Eigen::VectorXd::Constant(d, 0.01)));
            else
                comps.push_back(MixtureComponent::von_mises(u, a[k], m, Eigen::VectorXd::Constant(d, 5.0)));
        }
        comps.push_back(MixtureComponent::uniform(0.1));
        EmConfig cfg;
        cfg.max_iters = 60;
        const EmResult r = em_fit_traced(s, SparseMixtureModel(d, comps, 1), cfg);
        for (std::size_t i = 1; i < r.loglik.size(); ++i)
            REQUIRE(r.loglik[i] >= r.loglik[i - 1] - 1e-9 * std::abs(r.loglik[i - 1]));
        ++fits;
    }
    CHECK(fits == 50);
}

TEST_CASE("one EM iteration equals e_step followed by the M-steps") {
    Rng rng(103);
    const int N = 3000;
    Eigen::MatrixXd pts(3, N);
    for (int n = 0; n < N; ++n) {
        pts(0, n) = normal1(rng, 0.95, 0.05);
        pts(1, n) = normal1(rng, 0.3, 0.08);
        pts(2, n) = rng.uniform();
    }
    const WeightedSampleSet s(pts);
    std::vector<MixtureComponent> comps{
        MixtureComponent::wrapped_full({0, 1}, 0.5, vec({0.9, 0.35}), testing::random_spd(rng, 2, 0.01)),
        MixtureComponent::wrapped_diag({1, 2}, 0.3, vec({0.2, 0.5}), vec({0.02, 0.05})),
        MixtureComponent::uniform(0.2)};
    const SparseMixtureModel init(3, comps, 1);
    EmConfig cfg;
    cfg.max_iters = 1;
    const EmResult r = em_fit_traced(s, init, cfg);
    REQUIRE(r.model.size() == 3);

    const EStep es = e_step(init, s);
    CHECK(r.loglik.front() == doctest::Approx(es.loglik).epsilon(1e-12));
    for (std::size_t k = 0; k < 2; ++k) {
        const auto up = m_step_wrapped(s, es.beta.col(static_cast<Eigen::Index>(k)), comps[k], 1);
        const auto& got = r.model.components()[k];
        CHECK(got.alpha == doctest::Approx(up.mass / s.total_weight()).epsilon(1e-10));
        CHECK((got.mean - up.mean).cwiseAbs().maxCoeff() < 1e-10);
        const Eigen::MatrixXd cov = got.family == Family::WrappedFull ? got.cov : Eigen::MatrixXd(got.var.asDiagonal());
        CHECK((cov - up.cov).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(r.model.components()[2].alpha == doctest::Approx(es.beta.col(2).sum() / N).epsilon(1e-10));
}

TEST_CASE("wrapped M-step with B = 0 is the Euclidean MLE") {
    Rng rng(107);
    const int N = 2000;
    Eigen::MatrixXd pts(2, N);
    for (int n = 0; n < N; ++n) {
        pts(0, n) = std::clamp(0.5 + 0.08 * rng.normal(), 0.1, 0.9);
        pts(1, n) = std::clamp(0.4 + 0.05 * rng.normal() + 0.3 * (pts(0, n) - 0.5), 0.0, 0.8);
    }
    Eigen::VectorXd w(N), resp(N);
    for (int n = 0; n < N; ++n) {
        w[n] = 0.2 + rng.uniform();
        resp[n] = rng.uniform();
    }
    const WeightedSampleSet s(pts, w);
    const auto cur = MixtureComponent::wrapped_full({0, 1}, 1.0, vec({0.5, 0.45}), 0.01 * Eigen::MatrixXd::Identity(2, 2));
    const auto up = m_step_wrapped(s, resp, cur, 0);

    const Eigen::VectorXd r = w.cwiseProduct(resp);
    const double W = r.sum();
    const Eigen::VectorXd mean = pts * r / W;
    const Eigen::MatrixXd c = pts.colwise() - mean;
    const Eigen::MatrixXd cov = c * r.asDiagonal() * c.transpose() / W;
    CHECK(up.mass == doctest::Approx(W));
    CHECK((up.mean - mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((up.cov - cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("wrapped M-step floors a point mass and recovers a narrow variance across the seam") {
    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(2, 50, 0.3);
    const auto cur = MixtureComponent::wrapped_full({0, 1}, 1.0, vec({0.3, 0.3}), 0.01 * Eigen::MatrixXd::Identity(2, 2));
    const auto up = m_step_wrapped(WeightedSampleSet(same), Eigen::VectorXd::Ones(50), cur, 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(up.cov);
    CHECK(es.eigenvalues().minCoeff() >= 1e-8 * (1.0 - 1e-9));
    CHECK(up.mean[0] == doctest::Approx(0.3));

    Rng rng(109);
    const int N = 5000;
    Eigen::MatrixXd pts(1, N);
    for (int n = 0; n < N; ++n) pts(0, n) = normal1(rng, 0.99, 0.03);
    const auto start = wrapped1(1.0, 0.95, 0.002);
    const auto u1 = m_step_wrapped(WeightedSampleSet(pts), Eigen::VectorXd::Ones(N), start, 1);
    CHECK(circular_distance(u1.mean[0], 0.99) < 0.003);
    CHECK(std::abs(u1.cov(0, 0) / 0.0009 - 1.0) < 0.1);
}

TEST_CASE("von Mises M-step") {
    const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(1, 20, 0.7);
    auto up = m_step_von_mises(WeightedSampleSet(same), Eigen::VectorXd::Ones(20), {0});
    CHECK(up.kappa[0] == 1e4);
    CHECK(up.mean[0] == doctest::Approx(0.7));

    Eigen::MatrixXd even(1, 8);
    for (int i = 0; i < 8; ++i) even(0, i) = i / 8.0;
    up = m_step_von_mises(WeightedSampleSet(even), Eigen::VectorXd::Ones(8), {0});
    CHECK(up.kappa[0] == 1e-3);

    Rng rng(113);
    const int N = 4000;
    Eigen::MatrixXd pts(1, N);
    for (int n = 0; n < N; ++n) pts(0, n) = von_mises_draw(rng, 0.02, 25.0);
    up = m_step_von_mises(WeightedSampleSet(pts), Eigen::VectorXd::Ones(N), {0});
    CHECK(std::abs(up.kappa[0] / 25.0 - 1.0) < 0.15);
    CHECK(circular_distance(up.mean[0], 0.02) < 0.01);
}

TEST_CASE("prox on the simplex: small cases") {
    const auto a = vec({0.3, 0.7});
    CHECK(prox_l0_simplex(a, 1e-12).kept == IndexSet{0, 1});
    CHECK((prox_l0_simplex(a, 1e-12).alpha - a).norm() == 0.0);
    const auto one = prox_l0_simplex(vec({1.0}), 10.0);
    CHECK(one.kept == IndexSet{0});
    CHECK(one.alpha[0] == 1.0);

    // K = 2 drops the smaller weight exactly when it is below sqrt(gamma)
    const double gamma = 1e-3;
    CHECK(prox_l0_simplex(vec({0.03, 0.97}), gamma).kept == IndexSet{1});
    CHECK(prox_l0_simplex(vec({0.033, 0.967}), gamma).kept == IndexSet{0, 1});

    const auto abc = vec({0.05, 0.15, 0.8});
    for (double g : {1e-4, 1e-3, 3e-3, 1e-2, 0.03, 0.1, 1.0}) {
        const auto r = prox_l0_simplex(abc, g);
        CHECK(prox_value(abc, r, g) == doctest::Approx(prox_oracle(abc, g)).epsilon(1e-12));
    }
    const auto r = prox_l0_simplex(abc, 3e-3);
    CHECK(r.kept == IndexSet{1, 2});
    CHECK(r.alpha[1] == doctest::Approx(0.175));
    CHECK(r.alpha[2] == doctest::Approx(0.825));
    CHECK_THROWS_AS(prox_l0_simplex(abc, 0.0), ContractError);
    CHECK_THROWS_AS(prox_l0_simplex(vec({-0.1, 1.1}), 1.0), ContractError);
}

TEST_CASE("prox fuzz: optimality, simplex closure and permutation equivariance") {
    Rng rng(127);
    for (int t = 0; t < 1000; ++t) {
        const int K = 1 + static_cast<int>(rng.below(8));
        const Eigen::VectorXd a = random_simplex(rng, K);
        const double gamma = std::pow(10.0, -4.0 + 4.0 * rng.uniform());
        const auto r = prox_l0_simplex(a, gamma);
        REQUIRE(!r.kept.empty());
        REQUIRE(std::abs(r.alpha.sum() - 1.0) < 1e-12);
        REQUIRE(r.alpha.minCoeff() >= 0.0);
        REQUIRE(prox_value(a, r, gamma) <= prox_oracle(a, gamma) + 1e-9);

        std::vector<int> perm(static_cast<std::size_t>(K));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = K - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        Eigen::VectorXd pa(K);
        for (int i = 0; i < K; ++i) pa[i] = a[perm[static_cast<std::size_t>(i)]];
        const auto pr = prox_l0_simplex(pa, gamma);
        for (int i = 0; i < K; ++i) REQUIRE(pr.alpha[i] == doctest::Approx(r.alpha[perm[static_cast<std::size_t>(i)]]).epsilon(1e-14));
    }
}

TEST_CASE("prox-EM removes a spurious component") {
    Rng rng(131);
    const int N = 3000;
    Eigen::MatrixXd pts(1, N);
    for (int n = 0; n < N; ++n) pts(0, n) = normal1(rng, 0.4, 0.05);
    const SparseMixtureModel init(1, {wrapped1(0.9, 0.38, 0.004), wrapped1(0.1, 0.85, 0.002)}, 1);
    const auto plain = em_fit(WeightedSampleSet(pts), init, EmConfig{});
    const auto pruned = prox_em_fit(WeightedSampleSet(pts), init, ProxConfig{1e-3}, EmConfig{});
    CHECK(pruned.size() == 1);
    CHECK(pruned.components()[0].alpha == 1.0);
    CHECK(circular_distance(pruned.components()[0].mean[0], 0.4) < 0.005);
    CHECK(plain.size() >= 1);
}

TEST_CASE("fixed-group EM") {
    Rng rng(137);
    const int N = 6000;
    Eigen::MatrixXd pts(1, N);
    for (int n = 0; n < N; ++n) pts(0, n) = rng.uniform() < 0.5 ? normal1(rng, 0.2, 0.03) : normal1(rng, 0.7, 0.03);
    const WeightedSampleSet s(pts);
    const std::vector<MixtureComponent> fixed{wrapped1(0.5, 0.2, 0.0009)};

    SUBCASE("recovers the free component") {
        const auto r = fixed_group_em(s, fixed, {wrapped1(0.5, 0.65, 0.005)}, std::nullopt, EmConfig{}, 1);
        REQUIRE(r.model.size() == 2);
        CHECK(r.n_fixed == 1);
        CHECK(r.model.components()[0].mean[0] == 0.2);
        CHECK(r.model.components()[0].alpha == 0.5);
        CHECK(circular_distance(r.model.components()[1].mean[0], 0.7) < 0.01);
        CHECK(std::abs(r.model.components()[1].cov(0, 0) - 0.0009) < 0.0002);
        CHECK(r.model.components()[1].alpha == doctest::Approx(0.5));
    }
    SUBCASE("empty free group returns the fixed components") {
        const auto r = fixed_group_em(s, {wrapped1(1.0, 0.2, 0.0009)}, {}, std::nullopt, EmConfig{}, 1);
        REQUIRE(r.model.size() == 1);
        CHECK(r.model.components()[0].mean[0] == 0.2);
    }
    SUBCASE("empty fixed group is plain EM") {
        const std::vector<MixtureComponent> init{wrapped1(0.5, 0.25, 0.005), wrapped1(0.5, 0.65, 0.005)};
        const auto r = fixed_group_em(s, {}, init, std::nullopt, EmConfig{}, 1);
        const auto e = em_fit(s, SparseMixtureModel(1, init, 1), EmConfig{});
        REQUIRE(r.model.size() == e.size());
        for (std::size_t k = 0; k < e.size(); ++k) {
            CHECK(r.model.components()[k].alpha == doctest::Approx(e.components()[k].alpha).epsilon(1e-9));
            CHECK(r.model.components()[k].mean[0] == doctest::Approx(e.components()[k].mean[0]).epsilon(1e-9));
        }
    }
}

TEST_CASE("BIC selection") {
    SUBCASE("one cluster") {
        int ones = 0;
        const int seeds = 20;
        for (int sd = 0; sd < seeds; ++sd) {
            Rng rng(2000 + sd);
            Eigen::VectorXd v(2000);
            for (auto& x : v) x = normal1(rng, 0.6, 0.04);
            EmConfig cfg;
            cfg.seed = static_cast<std::uint64_t>(sd);
            ones += bic_select(univariate(v), 3, Family::WrappedFull, cfg).k_opt == 1;
        }
        CHECK(ones >= 0.95 * seeds);
    }
    SUBCASE("two clusters") {
        Rng rng(139);
        Eigen::VectorXd v(3000);
        for (auto& x : v) x = rng.uniform() < 0.4 ? normal1(rng, 0.15, 0.03) : normal1(rng, 0.6, 0.05);
        const auto r = bic_select(univariate(v), 3, Family::WrappedFull, EmConfig{});
        CHECK(r.k_opt == 2);
        CHECK(r.bic.size() == 3);
        CHECK(r.model.size() == 2);
        CHECK(bic_select(univariate(v), 1, Family::WrappedFull, EmConfig{}).k_opt == 1);
    }
    SUBCASE("uniform component is carried along") {
        Rng rng(149);
        Eigen::VectorXd v(3000);
        for (auto& x : v) x = rng.uniform() < 0.5 ? rng.uniform() : normal1(rng, 0.3, 0.03);
        BicConfig bc;
        bc.with_uniform = true;
        const auto r = bic_select(univariate(v), 3, Family::WrappedFull, EmConfig{}, bc);
        CHECK(r.k_opt == 1);
        REQUIRE(r.model.size() == 2);
        CHECK(bic_parameter_count(r.model) == 3);
    }
    CHECK(bic_parameter_count(SparseMixtureModel(1, {wrapped1(0.5, 0.2, 0.01), wrapped1(0.5, 0.7, 0.01)}, 1)) == 5);
}

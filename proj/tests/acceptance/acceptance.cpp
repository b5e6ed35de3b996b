// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 when any criterion fails.

#include "cli.hpp"

#include "spamm/learner.hpp"
#include "spamm/mixture.hpp"
#include "spamm/model_io.hpp"
#include "spamm/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace spamm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    enum Kind { Pass, Fail, Skip } kind = Fail;
    std::string detail;
};

struct Report {
    int failed = 0;

    void line(int id, const std::string& title, const Outcome& o) {
        const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
        if (o.kind == Outcome::Fail) ++failed;
        std::cout << "[" << tag << "] " << id << ". " << title << ": " << o.detail << std::endl;
    }
};

std::string num(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

Outcome by_count(int ok, int total, int need, const std::string& what) {
    return {ok >= need ? Outcome::Pass : Outcome::Fail,
            std::to_string(ok) + "/" + std::to_string(total) + " seeds " + what + " (need " + std::to_string(need) + ")"};
}

std::set<IndexSet> structure(const SparseMixtureModel& m) {
    std::set<IndexSet> out;
    for (const auto& c : m.components()) out.insert(c.u);
    return out;
}

const MixtureComponent* find(const SparseMixtureModel& m, const IndexSet& u) {
    for (const auto& c : m.components())
        if (c.u == u) return &c;
    return nullptr;
}

// Structure, weights, means and covariance diagonals against a wrapped ground truth.
bool matches_truth(const SparseMixtureModel& fit, const SparseMixtureModel& truth, bool check_params,
                   std::string& why) {
    std::set<IndexSet> want = structure(truth);
    if (structure(fit) != want || fit.size() != truth.size()) {
        why = "structure";
        return false;
    }
    for (const auto& t : truth.components()) {
        const MixtureComponent* c = find(fit, t.u);
        if (std::abs(c->alpha - t.alpha) > 0.02) {
            why = "alpha";
            return false;
        }
        if (!check_params) continue;
        for (Eigen::Index i = 0; i < t.mean.size(); ++i) {
            if (circular_distance(c->mean[i], t.mean[i]) > 0.005) {
                why = "mean";
                return false;
            }
            if (std::abs(c->cov(i, i) / t.cov(i, i) - 1.0) > 0.2) {
                why = "cov";
                return false;
            }
        }
    }
    return true;
}

LearnerConfig recovery_config(std::uint64_t seed) {
    LearnerConfig cfg;
    cfg.eps_ks = 5.0;
    cfg.eps_c = 0.1;
    cfg.gamma1 = 3e-3;
    cfg.gamma2 = 1e-3;
    cfg.em.seed = seed;
    return cfg;
}

LearnerConfig f3_config(std::uint64_t seed) {
    LearnerConfig cfg = recovery_config(seed);
    cfg.eps_ks = 3.4;
    cfg.gamma1 = 3e-3;
    return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one doctest case of a unit-test binary; passes when it matched and succeeded.
bool run_case(const std::string& exe, const std::string& pattern, std::string& summary) {
    const std::string cmd = "'" + exe + "' -tc='" + pattern + "' 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return false;
    std::string out;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) out += buf;
    const int rc = pclose(p);
    const auto pos = out.find("[doctest] test cases:");
    summary = pos == std::string::npos ? "no summary" : out.substr(pos, out.find('\n', pos) - pos);
    int ran = 0, passed = 0;
    if (pos != std::string::npos) std::sscanf(out.c_str() + pos, "[doctest] test cases: %d | %d passed", &ran, &passed);
    return rc == 0 && ran >= 1 && passed == ran;
}

// cli::run with the command's own stdout summary swallowed
int run_quiet(const std::vector<std::string>& args) {
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc = 2;
    try {
        rc = cli::run(args);
    } catch (...) {
        std::cout.rdbuf(old);
        throw;
    }
    std::cout.rdbuf(old);
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spamm acceptance run"};
    int seeds = 5;
    std::string housing = std::getenv("SPAMM_HOUSING_CSV") ? std::getenv("SPAMM_HOUSING_CSV") : "";
    std::string work = (fs::temp_directory_path() / "spamm_acceptance").string();
    std::string test_dir = SPAMM_TEST_DIR;
    app.add_option("--seeds", seeds, "seeds per criterion")->capture_default_str();
    app.add_option("--housing", housing, "California Housing CSV (criterion 7 is skipped without it)");
    app.add_option("--work", work, "scratch directory")->capture_default_str();
    app.add_option("--test-dir", test_dir, "directory holding the unit-test binaries")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::err);
    fs::create_directories(work);
    const int need = seeds - seeds / 5;  // 4 of 5

    Report rep;
    const auto t_all = std::chrono::steady_clock::now();

    // ---- samples shared by criteria 1, 2, 3, 5
    const auto f1_truth = f1_model();
    const auto f2_truth = f2_model(0.3);
    std::vector<WeightedSampleSet> f1_samples, f2_samples;
    for (int s = 1; s <= seeds; ++s) {
        f1_samples.push_back(rejection_sample(make_test_function(TestFunction::F1), 10000, static_cast<std::uint64_t>(s)));
        f2_samples.push_back(rejection_sample(make_test_function(TestFunction::F2Alt), 10000, static_cast<std::uint64_t>(s)));
    }

    // ---- 1. f1 parameter recovery
    std::vector<SparseMixtureModel> f1_fits;
    {
        int ok = 0;
        std::string notes;
        double slowest = 0.0;
        for (int s = 0; s < seeds; ++s) {
            const auto t0 = std::chrono::steady_clock::now();
            f1_fits.push_back(learn_sparse_mm(f1_samples[static_cast<std::size_t>(s)], recovery_config(static_cast<std::uint64_t>(s + 1))).model);
            slowest = std::max(slowest, seconds_since(t0));
            std::string why;
            if (matches_truth(f1_fits.back(), f1_truth, true, why)) ++ok;
            else notes += " seed " + std::to_string(s + 1) + " off in " + why + ";";
        }
        auto o = by_count(ok, seeds, need, "recover U, alpha, mean and covariance");
        o.detail += ", slowest fit " + num(slowest, 3) + " s" + notes;
        rep.line(1, "f1 parameter recovery", o);
    }

    // ---- 2. f2 (mu3 = 0.3) structure and weights
    std::vector<SparseMixtureModel> f2_fits;
    {
        int ok = 0;
        std::string notes;
        for (int s = 0; s < seeds; ++s) {
            f2_fits.push_back(learn_sparse_mm(f2_samples[static_cast<std::size_t>(s)], recovery_config(static_cast<std::uint64_t>(s + 1))).model);
            std::string why;
            if (matches_truth(f2_fits.back(), f2_truth, false, why)) ++ok;
            else notes += " seed " + std::to_string(s + 1) + " off in " + why + ";";
        }
        auto o = by_count(ok, seeds, need, "recover U and alpha");
        o.detail += notes;
        rep.line(2, "f2 structure and weights", o);
    }

    // ---- 3. density accuracy of the learned f1 models
    {
        int ok = 0;
        std::string notes;
        const auto truth = DensityOracle::from_model(f1_truth);
        for (int s = 0; s < seeds; ++s) {
            const auto hat = DensityOracle::from_model(f1_fits[static_cast<std::size_t>(s)]);
            const double l2 = relative_lp_error(hat.function(), truth.function(), 15, 2, 100000, 900 + static_cast<std::uint64_t>(s));
            const double l1 = relative_lp_error(hat.function(), truth.function(), 15, 1, 100000, 900 + static_cast<std::uint64_t>(s));
            const double ll_hat = log_likelihood(f1_fits[static_cast<std::size_t>(s)], f1_samples[static_cast<std::size_t>(s)]);
            const double ll_true = log_likelihood(f1_truth, f1_samples[static_cast<std::size_t>(s)]);
            const double ll_rel = std::abs(ll_hat - ll_true) / std::abs(ll_true);
            const bool pass = l2 <= 0.06 && l1 <= 0.07 && ll_rel <= 1e-3;
            ok += pass;
            notes += " [" + std::to_string(s + 1) + ": L2 " + num(l2) + ", L1 " + num(l1) + ", dLL " + num(100 * ll_rel, 3) + "%]";
        }
        auto o = by_count(ok, seeds, need, "within L2 0.06, L1 0.07, loglik 0.1%");
        o.detail += notes;
        rep.line(3, "f1 density accuracy", o);
    }

    // ---- 4. f3 structure (mandatory) and L1 error (advisory)
    std::vector<SparseMixtureModel> f3_fits;
    {
        const std::set<IndexSet> want(f3_couplings().begin(), f3_couplings().end());
        const auto oracle = make_test_function(TestFunction::F3);
        int ok = 0;
        std::string notes;
        double worst_l1 = 0.0;
        for (int s = 0; s < seeds; ++s) {
            const auto seed = 101 + static_cast<std::uint64_t>(s);
            const auto samples = rejection_sample(oracle, 10000, seed);
            f3_fits.push_back(learn_sparse_mm(samples, f3_config(seed)).model);
            const auto got = structure(f3_fits.back());
            if (got == want) {
                ++ok;
            } else {
                notes += " seed " + std::to_string(seed) + " U=";
                for (const auto& u : got) {
                    notes += "{";
                    for (std::size_t i = 0; i < u.size(); ++i) notes += (i ? "," : "") + std::to_string(u[i]);
                    notes += "}";
                }
                notes += ";";
            }
            const auto hat = DensityOracle::from_model(f3_fits.back());
            worst_l1 = std::max(worst_l1, relative_lp_error(hat.function(), oracle.function(), 9, 1, 100000, 700 + seed));
        }
        auto o = by_count(ok, seeds, need, "recover U (0-based {0,2,7},{1,4,5},{3,6,8})");
        o.detail += "; advisory worst L1 " + num(worst_l1) + (worst_l1 <= 0.12 ? " <= 0.12" : " > 0.12") + ";" + notes;
        rep.line(4, "f3 structure", o);
    }

    // ---- 5. active sets
    {
        int ok1 = 0, ok2 = 0;
        for (int s = 0; s < seeds; ++s) {
            auto a1 = detect_active_set(f1_samples[static_cast<std::size_t>(s)], 5.0, 0.1).active;
            auto a2 = detect_active_set(f2_samples[static_cast<std::size_t>(s)], 5.0, 0.1).active;
            std::sort(a1.begin(), a1.end());
            std::sort(a2.begin(), a2.end());
            ok1 += a1 == IndexSet{0, 1, 8, 14};
            ok2 += a2 == IndexSet{0, 1, 5, 8, 14};
        }
        const bool pass = ok1 >= need && ok2 >= need;
        rep.line(5, "active sets",
                 {pass ? Outcome::Pass : Outcome::Fail, "f1 " + std::to_string(ok1) + "/" + std::to_string(seeds) +
                                                            ", f2 " + std::to_string(ok2) + "/" + std::to_string(seeds) +
                                                            " seeds exact (need " + std::to_string(need) + " each)"});
    }

    // ---- 6. property suites, delegated to the unit-test binaries
    {
        const std::vector<std::pair<std::string, std::string>> cases{
            {"test_em", "EM never decreases the log-likelihood"},
            {"test_em", "prox fuzz*"},
            {"test_linalg", "block inverse property suite on 1000 SPD matrices"},
            {"test_mixture", "wrapped marginal equals quadrature*"},
            {"test_mixture", "marginal mixture matches quadrature and stratified MC"},
            {"test_densities", "truncation is stable from B to B + 5*"},
            {"test_stats", "KS statistic matches the quadratic oracle"}};
        int ok = 0;
        std::string notes;
        for (const auto& [exe, pattern] : cases) {
            std::string summary;
            if (run_case((fs::path(test_dir) / exe).string(), pattern, summary)) ++ok;
            else notes += " failed: " + exe + " '" + pattern + "' (" + summary + ");";
        }
        rep.line(6, "property suites",
                 {ok == static_cast<int>(cases.size()) ? Outcome::Pass : Outcome::Fail,
                  std::to_string(ok) + "/" + std::to_string(cases.size()) + " suites green" + notes});
    }

    // ---- 7. regression
    {
        const fs::path dir = fs::path(work) / "regress";
        fs::create_directories(dir);
        const std::string csv = (dir / "linreg.csv").string(), pred = (dir / "linreg_pred.csv").string();
        bool pass = false;
        std::string detail;
        if (run_quiet({"sample", "--target", "linreg", "--n", "2000", "--seed", "5", "--out", csv, "--log-level", "off"}) == 0 &&
            run_quiet({"regress", "--train", csv, "--target-col", "x1", "--seed", "5", "--out", pred, "--log-level", "off"}) == 0) {
            const json metrics = json::parse(slurp(dir / "linreg_pred.metrics.json"));
            const json manifest = json::parse(slurp(pred + ".manifest.json"));
            const auto& sc = manifest.at("config").at("scaler").at(1);
            const double noise = 0.01 / (sc.at("max").get<double>() - sc.at("min").get<double>());
            const double err = metrics.at("mse_scaled").get<double>();
            pass = err < 10.0 * noise * noise;
            detail = "synthetic MSE " + num(err) + " vs bound " + num(10.0 * noise * noise);
        } else {
            detail = "synthetic regress command failed";
        }
        rep.line(7, "regression (synthetic)", {pass ? Outcome::Pass : Outcome::Fail, detail});

        if (housing.empty() || !fs::exists(housing)) {
            rep.line(7, "regression (California Housing)",
                     {Outcome::Skip, "dataset not supplied (set SPAMM_HOUSING_CSV or --housing)"});
        } else {
            const json expected = json::parse(slurp(SPAMM_HOUSING_EXPECTED));
            const json& c = expected.at("command");
            const double bound = expected.at("bound_mse_scaled").get<double>();
            const std::string hp = (dir / "housing_pred.csv").string();
            const int rc = run_quiet({"regress", "--train", housing, "--target-col", c.at("target_col").get<std::string>(),
                                     "--seed", std::to_string(c.at("seed").get<int>()), "--eps-ks",
                                     num(c.at("eps_ks").get<double>()), "--test-fraction",
                                     num(c.at("test_fraction").get<double>()), "--out", hp, "--log-level", "off"});
            if (rc != 0) {
                rep.line(7, "regression (California Housing)", {Outcome::Fail, "regress exited with " + std::to_string(rc)});
            } else {
                const double err = json::parse(slurp(dir / "housing_pred.metrics.json")).at("mse_scaled").get<double>();
                rep.line(7, "regression (California Housing)",
                         {err <= bound ? Outcome::Pass : Outcome::Fail,
                          "scaled MSE " + num(err) + " (bound " + num(bound) + ")"});
            }
        }
    }

    // ---- 8. determinism of the fitted models
    {
        const bool f1_same = dump_model(learn_sparse_mm(f1_samples[0], recovery_config(1)).model) == dump_model(f1_fits[0]);
        const bool f2_same = dump_model(learn_sparse_mm(f2_samples[0], recovery_config(1)).model) == dump_model(f2_fits[0]);
        const auto f3_again = learn_sparse_mm(rejection_sample(make_test_function(TestFunction::F3), 10000, 101), f3_config(101)).model;
        const bool f3_same = dump_model(f3_again) == dump_model(f3_fits[0]);
        const bool as_same = report_to_json(detect_active_set(f1_samples[0], 5.0, 0.1)).dump() ==
                             report_to_json(detect_active_set(rejection_sample(make_test_function(TestFunction::F1), 10000, 1), 5.0, 0.1)).dump();
        const bool pass = f1_same && f2_same && f3_same && as_same;
        rep.line(8, "determinism",
                 {pass ? Outcome::Pass : Outcome::Fail,
                  std::string("byte-identical reruns: f1 ") + (f1_same ? "yes" : "no") + ", f2 " + (f2_same ? "yes" : "no") +
                      ", f3 " + (f3_same ? "yes" : "no") + ", active-set report " + (as_same ? "yes" : "no")});
    }

    std::cout << "acceptance: " << rep.failed << " failed, total " << num(seconds_since(t_all), 4) << " s" << std::endl;
    return rep.failed == 0 ? 0 : 1;
}

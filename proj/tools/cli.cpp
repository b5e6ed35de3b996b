#include "cli.hpp"

#include "spamm/csv.hpp"
#include "spamm/learner.hpp"
#include "spamm/mixture.hpp"
#include "spamm/model_io.hpp"
#include "spamm/parallel.hpp"
#include "spamm/rng.hpp"
#include "spamm/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>

namespace spamm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Manifest {
    std::string command;
    json config = json::object();
    std::uint64_t seed = 0;
    json inputs = json::object();
    json outputs = json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& primary) const {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        json j{{"command", command},   {"config", config},       {"seed", seed},
               {"inputs", inputs},     {"outputs", outputs},     {"duration_seconds", secs},
               {"version", SPAMM_VERSION}, {"timestamp", stamp}, {"threads", thread_count()}};
        fs::path p = primary;
        p += ".manifest.json";
        write_file_atomic(p, j.dump(2) + "\n");
    }
};

fs::path sibling(const fs::path& primary, const std::string& suffix) {
    fs::path p = primary;
    p.replace_extension();
    p += suffix;
    return p;
}

struct FitArgs {
    std::string family = "wrapped_full";
    double eps_ks = 5.0;
    double eps_c = 0.1;
    double gamma1 = 3e-3;
    double gamma2 = 1e-3;
    int k_max = 3;
    int B = 1;
    std::uint64_t seed = 0;
    std::string bic_penalty = "log_weight";
    int max_iters = 200;
    double rel_tol = 1e-7;

    void add(CLI::App* app) {
        app->add_option("--family", family, "wrapped_full | wrapped_diag | von_mises")->capture_default_str();
        app->add_option("--eps-ks", eps_ks, "KS threshold on the sqrt(N)-scaled statistic")->capture_default_str();
        app->add_option("--eps-c", eps_c, "correlation threshold")->capture_default_str();
        app->add_option("--gamma1", gamma1, "prox rate of the joint refit")->capture_default_str();
        app->add_option("--gamma2", gamma2, "prox rate of univariate fits")->capture_default_str();
        app->add_option("--k-max", k_max, "largest component count tried by the BIC")->capture_default_str();
        app->add_option("--b", B, "lattice truncation bound")->capture_default_str();
        app->add_option("--seed", seed, "seed for EM restarts")->capture_default_str();
        app->add_option("--bic-penalty", bic_penalty, "log_weight | printed")->capture_default_str();
        app->add_option("--max-iters", max_iters, "EM iteration cap")->capture_default_str();
        app->add_option("--rel-tol", rel_tol, "EM relative improvement stop")->capture_default_str();
    }

    [[nodiscard]] LearnerConfig config() const {
        LearnerConfig c;
        c.family = parse_family(family);
        c.eps_ks = eps_ks;
        c.eps_c = eps_c;
        c.gamma1 = gamma1;
        c.gamma2 = gamma2;
        c.k_max = k_max;
        c.B = B;
        c.em.seed = seed;
        c.em.max_iters = max_iters;
        c.em.rel_tol = rel_tol;
        if (bic_penalty == "log_weight") c.bic_penalty = BicPenalty::LogWeight;
        else if (bic_penalty == "printed") c.bic_penalty = BicPenalty::Printed;
        else throw ContractError("unknown --bic-penalty '" + bic_penalty + "'");
        c.validate();
        return c;
    }
};

std::string trace_lines(const std::vector<json>& trace) {
    std::string s;
    for (const auto& e : trace) s += e.dump() + "\n";
    return s;
}

void emit(const std::string& out, const json& j) {
    if (out.empty() || out == "-") std::cout << j.dump(2) << "\n";
    else write_file_atomic(out, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- sample

struct SampleCmd {
    std::string target = "f1";
    long long n = 10000;
    std::uint64_t seed = 0;
    std::string out;
    bool weights = false;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("sample", "rejection-sample a test density to CSV");
        s->add_option("--target", target, "f1 | f2 | f2_alt | f3 | linreg")->capture_default_str();
        s->add_option("--n", n, "number of samples")->capture_default_str();
        s->add_option("--seed", seed, "RNG seed")->capture_default_str();
        s->add_option("--out", out, "output CSV")->required();
        s->add_flag("--weights", weights, "append a unit weight column");
        s->callback([this] { run(); });
    }

    void run() const {
        if (n < 0) throw ContractError("--n must be non-negative");
        Manifest m;
        m.command = "sample";
        m.seed = seed;
        m.config = {{"target", target}, {"n", n}, {"weights", weights}};
        const WeightedSampleSet s = target == "linreg"
                                        ? make_linreg_samples(n, seed)
                                        : rejection_sample(make_test_function(parse_test_function(target)), n, seed);
        write_file_atomic(out, samples_to_csv(s, weights));
        m.outputs = {{"samples", out}};
        m.write(out);
        spdlog::info("wrote {} samples of dimension {} to {}", s.size(), s.dim(), out);
    }
};

// ---------------------------------------------------------------- active-set

struct ActiveSetCmd {
    std::string in, out;
    double eps_ks = 5.0, eps_c = 0.1;
    bool wrap = false;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("active-set", "KS and correlation screening of every dimension");
        s->add_option("--in", in, "input CSV")->required();
        s->add_option("--eps-ks", eps_ks, "KS threshold")->capture_default_str();
        s->add_option("--eps-c", eps_c, "correlation threshold")->capture_default_str();
        s->add_option("--out", out, "report JSON (stdout when omitted)");
        s->add_flag("--wrap", wrap, "reduce values mod 1 instead of rejecting them");
        s->callback([this] { run(); });
    }

    void run() const {
        Manifest m;
        m.command = "active-set";
        m.config = {{"eps_ks", eps_ks}, {"eps_c", eps_c}, {"wrap", wrap}};
        m.inputs = {{"samples", in}};
        const WeightedSampleSet s = read_samples_csv(in, wrap);
        const ActiveSetReport r = detect_active_set(s, eps_ks, eps_c);
        emit(out, report_to_json(r));
        if (!out.empty() && out != "-") {
            m.outputs = {{"report", out}};
            m.write(out);
        }
    }
};

// ---------------------------------------------------------------- fit

struct FitCmd {
    std::string in, out, report, trace;
    bool wrap = false;
    FitArgs args;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("fit", "learn a sparse mixture model");
        s->add_option("--in", in, "input CSV")->required();
        s->add_option("--out", out, "model JSON")->required();
        s->add_option("--report", report, "active-set report (default <out>.report.json)");
        s->add_option("--trace", trace, "line-delimited trace (default <out>.trace.jsonl)");
        s->add_flag("--wrap", wrap, "reduce values mod 1 instead of rejecting them");
        args.add(s);
        s->callback([this] { run(); });
    }

    void run() const {
        const LearnerConfig cfg = args.config();
        Manifest m;
        m.command = "fit";
        m.seed = args.seed;
        m.config = config_to_json(cfg);
        m.inputs = {{"samples", in}};
        const WeightedSampleSet s = read_samples_csv(in, wrap);
        if (s.size() < 10) throw ContractError("fit needs at least 10 samples, got " + std::to_string(s.size()));
        const LearnResult r = learn_sparse_mm(s, cfg);
        const fs::path rep = report.empty() ? sibling(out, ".report.json") : fs::path(report);
        const fs::path tr = trace.empty() ? sibling(out, ".trace.jsonl") : fs::path(trace);
        save_model(r.model, out);
        write_file_atomic(rep, report_to_json(r.report).dump(2) + "\n");
        write_file_atomic(tr, trace_lines(r.trace));
        m.outputs = {{"model", out}, {"report", rep.string()}, {"trace", tr.string()}, {"warnings", r.warnings}};
        m.write(out);
        spdlog::info("fitted {} components; log-likelihood {}", r.model.size(), log_likelihood(r.model, s));
    }
};

// ---------------------------------------------------------------- eval

struct EvalCmd {
    std::string model, truth, in, out, p = "both";
    long long n_mc = 100000;
    std::uint64_t seed = 1;
    bool wrap = false;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("eval", "compare a model with a reference density");
        s->add_option("--model", model, "model JSON")->required();
        s->add_option("--truth", truth, "f1 | f2 | f2_alt | f3 | path to a model JSON");
        s->add_option("--n-mc", n_mc, "Monte-Carlo points")->capture_default_str();
        s->add_option("--p", p, "1, 2 or both")->capture_default_str();
        s->add_option("--in", in, "samples for log-likelihoods");
        s->add_option("--seed", seed, "Monte-Carlo seed")->capture_default_str();
        s->add_option("--out", out, "metrics JSON (stdout when omitted)");
        s->add_flag("--wrap", wrap, "reduce values mod 1 instead of rejecting them");
        s->callback([this] { run(); });
    }

    void run() const {
        if (n_mc < 1) throw ContractError("--n-mc must be positive");
        if (p != "1" && p != "2" && p != "both") throw ContractError("--p must be 1, 2 or both");
        Manifest m;
        m.command = "eval";
        m.seed = seed;
        m.config = {{"n_mc", n_mc}, {"p", p}, {"truth", truth}};
        m.inputs = {{"model", model}, {"samples", in}};
        const SparseMixtureModel fitted = load_model(model);
        const DensityOracle hat = DensityOracle::from_model(fitted);

        std::optional<DensityOracle> ref;
        if (!truth.empty()) {
            if (fs::exists(truth)) ref = DensityOracle::from_model(load_model(truth), truth);
            else ref = make_test_function(parse_test_function(truth));
            if (ref->dim() != fitted.dim())
                throw ContractError("model dimension " + std::to_string(fitted.dim()) +
                                    " does not match truth dimension " + std::to_string(ref->dim()));
        }
        json metrics = json::object();
        if (!in.empty()) {
            const WeightedSampleSet s = read_samples_csv(in, wrap);
            if (s.dim() != fitted.dim()) throw ContractError("sample dimension does not match the model");
            metrics["loglik_model"] = log_likelihood(fitted, s);
            if (ref) {
                double ll = 0.0;
                for (Eigen::Index n = 0; n < s.size(); ++n)
                    ll += s.weights()[n] * std::log((*ref)(s.points().col(n).data()));
                metrics["loglik_truth"] = ll;
            }
        }
        if (ref) {
            if (p != "2") metrics["rel_l1"] = relative_lp_error(hat.function(), ref->function(), ref->dim(), 1, n_mc, seed);
            if (p != "1") metrics["rel_l2"] = relative_lp_error(hat.function(), ref->function(), ref->dim(), 2, n_mc, seed);
        }
        emit(out, metrics);
        if (!out.empty() && out != "-") {
            m.outputs = {{"metrics", out}};
            m.write(out);
        }
    }
};

// ---------------------------------------------------------------- regress

struct Scaler {
    Eigen::VectorXd lo, hi;

    static Scaler fit(const Eigen::MatrixXd& data) {
        return {data.colwise().minCoeff().transpose(), data.colwise().maxCoeff().transpose()};
    }
    [[nodiscard]] double forward(Eigen::Index j, double v) const {
        const double range = hi[j] - lo[j];
        const double s = range > 0.0 ? (v - lo[j]) / range : 0.5;
        return std::clamp(s, 0.0, std::nextafter(1.0, 0.0));
    }
    [[nodiscard]] double inverse(Eigen::Index j, double s) const { return lo[j] + s * (hi[j] - lo[j]); }
};

Eigen::MatrixXd drop_nan_rows(const Eigen::MatrixXd& data, long long& dropped) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < data.rows(); ++r)
        if (data.row(r).array().isFinite().all()) keep.push_back(r);
    dropped = static_cast<long long>(data.rows()) - static_cast<long long>(keep.size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), data.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(keep[i]);
    return out;
}

Table select_columns(const Table& t, const std::vector<std::string>& names) {
    Table out;
    out.had_header = t.had_header;
    out.data.resize(t.data.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto it = std::find(t.names.begin(), t.names.end(), names[j]);
        if (it == t.names.end()) throw ContractError("test CSV lacks column '" + names[j] + "'");
        out.data.col(static_cast<Eigen::Index>(j)) = t.data.col(it - t.names.begin());
        out.names.push_back(names[j]);
    }
    return out;
}

struct RegressCmd {
    std::string train, test, target_col, out;
    double test_fraction = 0.2;
    FitArgs args;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("regress", "fit a joint density and predict a target by conditional expectation");
        s->add_option("--train", train, "training CSV")->required();
        s->add_option("--test", test, "test CSV (default: seeded split of --train)");
        s->add_option("--target-col", target_col, "target column name or 0-based index")->required();
        s->add_option("--test-fraction", test_fraction, "held-out share when --test is omitted")->capture_default_str();
        s->add_option("--out", out, "predictions CSV")->required();
        args.add(s);
        s->callback([this] { run(); });
    }

    void run() const {
        const LearnerConfig cfg = args.config();
        Manifest m;
        m.command = "regress";
        m.seed = args.seed;
        m.config = config_to_json(cfg);
        m.inputs = {{"train", train}, {"test", test}};

        Table tr = read_table(train, {.lenient = true});
        long long dropped_train = 0, dropped_test = 0;
        Eigen::MatrixXd train_data = drop_nan_rows(tr.data, dropped_train);
        Eigen::MatrixXd test_data;
        if (!test.empty()) {
            const Table te = select_columns(read_table(test, {.lenient = true}), tr.names);
            test_data = drop_nan_rows(te.data, dropped_test);
        } else {
            if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractError("--test-fraction must lie in (0,1)");
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(train_data.rows()));
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng(args.seed, 0x5eed);
            for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
            const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
            Eigen::MatrixXd a(static_cast<Eigen::Index>(idx.size() - n_test), train_data.cols());
            Eigen::MatrixXd b(static_cast<Eigen::Index>(n_test), train_data.cols());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (i < n_test) b.row(static_cast<Eigen::Index>(i)) = train_data.row(idx[i]);
                else a.row(static_cast<Eigen::Index>(i - n_test)) = train_data.row(idx[i]);
            }
            train_data = std::move(a);
            test_data = std::move(b);
        }
        if (dropped_train + dropped_test > 0)
            spdlog::warn("dropped {} training and {} test rows with missing values", dropped_train, dropped_test);
        if (train_data.rows() < 10) throw ContractError("regress needs at least 10 complete training rows");
        if (test_data.rows() < 1) throw ContractError("regress needs at least one test row");

        Eigen::Index target = -1;
        for (std::size_t j = 0; j < tr.names.size(); ++j)
            if (tr.names[j] == target_col) target = static_cast<Eigen::Index>(j);
        if (target < 0) {
            try {
                std::size_t pos = 0;
                const long long t = std::stoll(target_col, &pos);
                if (pos == target_col.size()) target = static_cast<Eigen::Index>(t);
            } catch (...) {
            }
        }
        const auto d = train_data.cols();
        if (target < 0 || target >= d) throw ContractError("unknown target column '" + target_col + "'");

        const Scaler sc = Scaler::fit(train_data);
        auto scale = [&](const Eigen::MatrixXd& raw) {
            Eigen::MatrixXd pts(d, raw.rows());
            for (Eigen::Index r = 0; r < raw.rows(); ++r)
                for (Eigen::Index j = 0; j < d; ++j) pts(j, r) = sc.forward(j, raw(r, j));
            return pts;
        };
        const WeightedSampleSet train_set(scale(train_data));
        const Eigen::MatrixXd test_pts = scale(test_data);

        const LearnResult fit = learn_sparse_mm(train_set, cfg);
        Eigen::VectorXd pred(test_pts.cols()), truth(test_pts.cols());
        std::string csv = "row,prediction,target,prediction_scaled,target_scaled,prediction_wrapped\n";
        for (Eigen::Index r = 0; r < test_pts.cols(); ++r) {
            Eigen::VectorXd feat(d - 1);
            for (Eigen::Index j = 0, i = 0; j < d; ++j)
                if (j != target) feat[i++] = test_pts(j, r);
            const Prediction p = conditional_expectation(fit.model, static_cast<int>(target), feat);
            pred[r] = std::clamp(p.unwrapped, 0.0, 1.0);
            truth[r] = test_pts(target, r);
            csv += std::to_string(r) + "," + format_double(sc.inverse(target, pred[r])) + "," +
                   format_double(test_data(r, target)) + "," + format_double(pred[r]) + "," +
                   format_double(truth[r]) + "," + format_double(p.wrapped) + "\n";
        }
        const double err = mse(pred, truth);
        write_file_atomic(out, csv);
        const fs::path model_path = sibling(out, ".model.json");
        save_model(fit.model, model_path);

        json scaler = json::array();
        for (Eigen::Index j = 0; j < d; ++j)
            scaler.push_back({{"column", tr.names[static_cast<std::size_t>(j)]}, {"min", sc.lo[j]}, {"max", sc.hi[j]}});
        const json metrics{{"mse_scaled", err},
                           {"n_train", train_data.rows()},
                           {"n_test", test_data.rows()},
                           {"dropped_rows_train", dropped_train},
                           {"dropped_rows_test", dropped_test},
                           {"target", tr.names[static_cast<std::size_t>(target)]},
                           {"active", fit.report.active}};
        const fs::path metrics_path = sibling(out, ".metrics.json");
        write_file_atomic(metrics_path, metrics.dump(2) + "\n");
        m.config["scaler"] = scaler;
        m.outputs = {{"predictions", out}, {"model", model_path.string()}, {"metrics", metrics_path.string()}};
        m.write(out);
        std::cout << "mse_scaled " << format_double(err) << "\n";
    }
};

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Sparse mixture models on the torus"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    std::string log_level = "warn";
    app.add_option("--threads", threads, "worker threads (default SPAMM_THREADS or all cores)");
    app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")->capture_default_str();
    app.parse_complete_callback([&] {
        if (threads > 0) set_thread_count(threads);
        spdlog::set_level(spdlog::level::from_str(log_level));
    });

    SampleCmd sample;
    ActiveSetCmd active;
    FitCmd fit;
    EvalCmd eval;
    RegressCmd regress;
    sample.add(app);
    active.add(app);
    fit.add(app);
    eval.add(app);
    regress.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericError;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericError;
    }
    return kOk;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"spamm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace spamm::cli

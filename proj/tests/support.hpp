#pragma once

#include "spamm/rng.hpp"
#include "spamm/types.hpp"

#include <filesystem>
#include <string>

namespace testing {

inline Eigen::MatrixXd random_spd(spamm::Rng& rng, int n, double scale = 1.0, double ridge = 0.1) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    return scale * (a * a.transpose() / n + ridge * Eigen::MatrixXd::Identity(n, n));
}

/// N draws of a wrapped Gaussian, d x N.
inline Eigen::MatrixXd wrapped_gaussian_draws(spamm::Rng& rng, const Eigen::VectorXd& mean,
                                              const Eigen::MatrixXd& cov, Eigen::Index N) {
    const Eigen::MatrixXd L = cov.llt().matrixL();
    const auto n = mean.size();
    Eigen::MatrixXd out(n, N);
    Eigen::VectorXd z(n);
    for (Eigen::Index s = 0; s < N; ++s) {
        for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
        const Eigen::VectorXd x = mean + L * z;
        for (Eigen::Index i = 0; i < n; ++i) out(i, s) = spamm::wrap01(x[i]);
    }
    return out;
}

inline Eigen::MatrixXd uniform_draws(spamm::Rng& rng, Eigen::Index d, Eigen::Index N) {
    Eigen::MatrixXd out(d, N);
    for (Eigen::Index s = 0; s < N; ++s)
        for (Eigen::Index i = 0; i < d; ++i) out(i, s) = rng.uniform();
    return out;
}

/// Fresh directory below the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        spamm::Rng rng(std::hash<std::string>{}(tag), 99);
        path_ = std::filesystem::temp_directory_path() / ("spamm_" + tag + "_" + std::to_string(rng.bits() % 1000000007));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing

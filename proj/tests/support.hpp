#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace testsupport {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string pattern = (fs::temp_directory_path() / "healthtags-XXXXXX").string();
        if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small generator wrapper for hand-rolled property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }
    Eigen::VectorXd vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }
    std::vector<double> values(std::size_t n, double lo, double hi) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(lo, hi);
        return v;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Independent minimizer of ||y - Xw - b||^2 + alpha ||w||^2 (b unpenalized):
// Nesterov-accelerated gradient descent on the raw objective with step 1/L, no
// centering and no linear solves. Stops once ||grad|| < tol; the distance to
// the minimizer is then below tol / (2 alpha). Returns w followed by b.
inline std::vector<double> ridge_by_gradient_descent(const std::vector<std::vector<double>>& X,
                                                     const std::vector<double>& y, double alpha,
                                                     double tol = 1e-10, int max_iter = 5000000) {
    const std::size_t n = X.size(), p = X.front().size();
    // Lipschitz bound of the gradient: 2 * (||[X 1]||_F^2 + alpha).
    double frob = static_cast<double>(n);
    for (const auto& row : X)
        for (double v : row) frob += v * v;
    const double step = 1.0 / (2.0 * (frob + alpha));

    // Gradient of sum (x.w + b - y)^2 + alpha |w|^2 at theta = (w, b).
    std::vector<double> resid(n);
    auto gradient = [&](const std::vector<double>& theta, std::vector<double>& grad) {
        for (std::size_t i = 0; i < n; ++i) {
            double f = theta[p];
            for (std::size_t j = 0; j < p; ++j) f += X[i][j] * theta[j];
            resid[i] = f - y[i];
        }
        double norm2 = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += resid[i] * (j < p ? X[i][j] : 1.0);
            g *= 2.0;
            if (j < p) g += 2.0 * alpha * theta[j];
            grad[j] = g;
            norm2 += g * g;
        }
        return std::sqrt(norm2);
    };

    // Nesterov momentum with gradient-based restart.
    std::vector<double> theta(p + 1, 0.0), prev(p + 1, 0.0), look(p + 1), grad(p + 1);
    double k = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        const double beta = k / (k + 3.0);
        for (std::size_t j = 0; j <= p; ++j) look[j] = theta[j] + beta * (theta[j] - prev[j]);
        gradient(look, grad);
        double progress = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
            const double next = look[j] - step * grad[j];
            progress += grad[j] * (next - theta[j]);
            prev[j] = theta[j];
            theta[j] = next;
        }
        k = progress > 0.0 ? 0.0 : k + 1.0;
        if (gradient(theta, grad) < tol) break;
    }
    return theta;
}

inline std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline std::vector<double> std_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace testsupport

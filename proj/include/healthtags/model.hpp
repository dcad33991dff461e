#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "healthtags/features.hpp"

namespace healthtags {

struct RidgeSpec {
    double alpha = 0.1;
    bool fit_intercept = true;
};

enum class RidgeSolver {
    automatic,  // dual when the design is wider than tall, primal otherwise
    primal,     // (Xᵀ X + αI) w = Xᵀ y, p x p
    dual,       // w = Xᵀ (X Xᵀ + αI)⁻¹ y, n x n
};

struct FittedModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double alpha = 0.0;
};

/// Minimizes ‖y − Xw − b‖² + α‖w‖² with b unpenalized. With an intercept the
/// columns of X and y are centered first and b = ȳ − x̄·w; without one b = 0.
/// Throws DataError on non-finite input, an empty design, or a singular
/// system (only possible when α = 0).
FittedModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const RidgeSpec& spec,
                      RidgeSolver solver = RidgeSolver::automatic);

/// Xw + b. Throws DataError when X has the wrong width.
Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X);

struct FoldAssignment {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> fold_of;  // per row

    std::vector<std::size_t> test_rows(std::size_t fold) const;
    std::vector<std::size_t> train_rows(std::size_t fold) const;
};

/// Seeded shuffle of [0, n) cut into k contiguous chunks whose sizes differ by
/// at most one. Throws ConfigError when k < 2 or n < k.
FoldAssignment kfold_split(std::size_t n, std::size_t k = 10, std::uint64_t seed = 0);

struct CrossValResult {
    Eigen::VectorXd pooled;  // out-of-fold prediction for every row, in row order
    std::vector<FittedModel> fold_models;
    FoldAssignment folds;
};

/// Fits on the complement of each fold and predicts the fold. Folds run
/// concurrently; a fit failure is rethrown as DataError naming the fold.
CrossValResult cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const RidgeSpec& spec, const FoldAssignment& folds);

/// {"weights", "intercept", "alpha", "columns": [{"block", "name"}], "fold_seed"}
std::string model_json(const FittedModel& model, std::span<const ColumnInfo> columns,
                       std::uint64_t fold_seed);

}  // namespace healthtags

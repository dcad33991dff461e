#include "healthtags/model.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <random>

#include <json.hpp>

#include "healthtags/error.hpp"

namespace healthtags {

namespace {

// Pivot ratio below which an unregularized Gram matrix is treated as singular.
constexpr double kSingularPivotRatio = 1e-10;

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double alpha) {
    if (alpha > 0.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() == Eigen::Success) return llt.solve(rhs);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) throw DataError("singular system");
    const auto d = ldlt.vectorD().cwiseAbs();
    if (d.size() > 0 && d.minCoeff() <= kSingularPivotRatio * d.maxCoeff())
        throw DataError("singular system");
    return ldlt.solve(rhs);
}

}  // namespace

FittedModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const RidgeSpec& spec,
                      RidgeSolver solver) {
    if (!(spec.alpha >= 0.0)) throw ConfigError("ridge alpha must be nonnegative");
    if (X.rows() != y.size()) throw DataError("design matrix and target differ in length");
    if (X.rows() < 1) throw DataError("ridge regression needs at least one row");
    if (!X.allFinite() || !y.allFinite()) throw DataError("non-finite value in ridge input");

    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(X.cols());
    double y_mean = 0.0;
    Eigen::MatrixXd Xc = X;
    Eigen::VectorXd yc = y;
    if (spec.fit_intercept) {
        x_mean = X.colwise().mean();
        y_mean = y.mean();
        Xc.rowwise() -= x_mean;
        yc.array() -= y_mean;
    }

    const auto n = Xc.rows();
    const auto p = Xc.cols();
    if (solver == RidgeSolver::automatic) solver = p > n ? RidgeSolver::dual : RidgeSolver::primal;

    FittedModel model;
    model.alpha = spec.alpha;
    if (solver == RidgeSolver::primal) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(Xc.transpose());
        gram = gram.selfadjointView<Eigen::Lower>();
        gram.diagonal().array() += spec.alpha;
        model.weights = solve_spd(gram, Xc.transpose() * yc, spec.alpha);
    } else {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(Xc);
        gram = gram.selfadjointView<Eigen::Lower>();
        gram.diagonal().array() += spec.alpha;
        model.weights = Xc.transpose() * solve_spd(gram, yc, spec.alpha);
    }
    model.intercept = spec.fit_intercept ? y_mean - x_mean.dot(model.weights) : 0.0;
    return model;
}

Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.weights.size())
        throw DataError("prediction input has " + std::to_string(X.cols()) +
                        " columns but the model has " + std::to_string(model.weights.size()) +
                        " weights");
    Eigen::VectorXd out = X * model.weights;
    out.array() += model.intercept;
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldAssignment::test_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldAssignment::train_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) rows.push_back(i);
    return rows;
}

FoldAssignment kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold cross-validation needs k >= 2");
    if (n < k)
        throw ConfigError("cannot split " + std::to_string(n) + " rows into " + std::to_string(k) +
                          " folds");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    FoldAssignment folds{k, seed, std::vector<std::size_t>(n)};
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) folds.fold_of[perm[pos++]] = f;
    }
    return folds;
}

CrossValResult cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const RidgeSpec& spec, const FoldAssignment& folds) {
    if (X.rows() != y.size() || folds.fold_of.size() != static_cast<std::size_t>(y.size()))
        throw DataError("cross-validation inputs have inconsistent lengths");

    auto run_fold = [&](std::size_t f) {
        const auto train = folds.train_rows(f);
        const auto test = folds.test_rows(f);
        try {
            FittedModel model = fit_ridge(X(train, Eigen::all), y(train), spec);
            Eigen::VectorXd pred = predict(model, X(test, Eigen::all));
            return std::pair{std::move(model), std::move(pred)};
        } catch (const DataError& e) {
            throw DataError("fold " + std::to_string(f) + ": " + e.what());
        }
    };

    std::vector<std::future<std::pair<FittedModel, Eigen::VectorXd>>> pending;
    for (std::size_t f = 0; f < folds.k; ++f) pending.push_back(std::async(std::launch::async, run_fold, f));

    CrossValResult result;
    result.folds = folds;
    result.pooled = Eigen::VectorXd::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < folds.k; ++f) {
        auto [model, pred] = pending[f].get();
        const auto test = folds.test_rows(f);
        for (std::size_t j = 0; j < test.size(); ++j) result.pooled(static_cast<Eigen::Index>(test[j])) = pred(static_cast<Eigen::Index>(j));
        result.fold_models.push_back(std::move(model));
    }
    return result;
}

std::string model_json(const FittedModel& model, std::span<const ColumnInfo> columns,
                       std::uint64_t fold_seed) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) cols.push_back({{"block", block_name(c.block)}, {"name", c.name}});
    return nlohmann::json{{"weights", std::vector<double>(model.weights.begin(), model.weights.end())},
                          {"intercept", model.intercept},
                          {"alpha", model.alpha},
                          {"columns", cols},
                          {"fold_seed", fold_seed}}
        .dump(2);
}

}  // namespace healthtags

#pragma once

// Classical statistics and shallow models: correlation, cross-validation
// splits, ridge and kernel ridge regression, PCA, one-vs-rest logistic
// classification, AUC and F1, plus the emotion / cluster evaluation harnesses.

#include "midlevel/detail/random.hpp"
#include "midlevel/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace midlevel {

// ---------------------------------------------------------------- correlation

/// Sample Pearson correlation.
inline double pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw Error(Errc::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    if (x.size() < 3)
        throw Error(Errc::TooFewItems, "pearson needs at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw Error(Errc::ConstantInput, "pearson input has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
    return pearson(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                   std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

// ------------------------------------------------------------------- splits

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold; // fold index per item, in input order

    std::vector<std::size_t> test_indices(std::size_t f) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold.size(); ++i)
            if (fold[i] == f)
                out.push_back(i);
        return out;
    }
    std::vector<std::size_t> train_indices(std::size_t f) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold.size(); ++i)
            if (fold[i] != f)
                out.push_back(i);
        return out;
    }
};

/// Seeded shuffle followed by round-robin fold assignment.
inline FoldAssignment kfold(std::size_t n_items, std::size_t k, std::uint64_t seed)
{
    if (k < 2 || n_items < k)
        throw Error(Errc::TooFewItems, std::to_string(n_items) + " items for " + std::to_string(k) + " folds");
    std::vector<std::size_t> order(n_items);
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::Rng rng(seed);
    detail::shuffle(order.begin(), order.end(), rng);
    FoldAssignment a{k, std::vector<std::size_t>(n_items)};
    for (std::size_t pos = 0; pos < n_items; ++pos)
        a.fold[order[pos]] = pos % k;
    return a;
}

template <class Id>
FoldAssignment kfold(const std::vector<Id>& ids, std::size_t k, std::uint64_t seed)
{
    return kfold(ids.size(), k, seed);
}

struct GroupedSplit {
    std::vector<std::size_t> train; // item indices
    std::vector<std::size_t> test;
    double test_fraction = 0.0;
    bool unreachable = false; // achieved fraction off target by more than 2 percentage points
};

/// Assigns whole groups to the test side, visiting groups in seeded order and
/// taking a group only when it moves the test size closer to the target.
inline GroupedSplit grouped_split(const std::vector<std::string>& groups, double test_frac, std::uint64_t seed)
{
    if (!(test_frac > 0.0 && test_frac < 1.0))
        throw Error(Errc::InvalidArgument, "test fraction must lie in (0, 1)");
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i)
        members[groups[i]].push_back(i);
    if (members.size() < 2)
        throw Error(Errc::TooFewGroups, "need at least 2 groups, have " + std::to_string(members.size()));

    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [g, idx] : members)
        order.push_back(&idx);
    detail::Rng rng(seed);
    detail::shuffle(order.begin(), order.end(), rng);

    const double n = static_cast<double>(groups.size());
    const double target = test_frac * n;
    std::vector<bool> in_test(order.size(), false);
    std::size_t count = 0, taken = 0;
    for (std::size_t g = 0; g < order.size(); ++g) {
        const std::size_t size = order[g]->size();
        if (taken + 1 == order.size())
            break;
        if (std::abs(static_cast<double>(count + size) - target) < std::abs(static_cast<double>(count) - target)) {
            in_test[g] = true;
            count += size;
            ++taken;
        }
    }
    if (taken == 0) {
        // every group overshoots: take the one closest to the target
        std::size_t best = 0;
        for (std::size_t g = 1; g < order.size(); ++g)
            if (std::abs(static_cast<double>(order[g]->size()) - target) <
                std::abs(static_cast<double>(order[best]->size()) - target))
                best = g;
        in_test[best] = true;
        count = order[best]->size();
    }

    GroupedSplit split;
    for (std::size_t g = 0; g < order.size(); ++g)
        for (std::size_t i : *order[g])
            (in_test[g] ? split.test : split.train).push_back(i);
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    split.test_fraction = static_cast<double>(count) / n;
    split.unreachable = std::abs(split.test_fraction - test_frac) > 0.02;
    return split;
}

inline GroupedSplit grouped_split(const std::vector<std::string>& ids, const std::vector<std::string>& groups,
                                  double test_frac, std::uint64_t seed)
{
    if (ids.size() != groups.size())
        throw Error(Errc::LengthMismatch, "ids and groups differ in length");
    return grouped_split(groups, test_frac, seed);
}

// ---------------------------------------------------------- standardization

struct Standardization {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale; // population std; 1 for constant columns

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const
    {
        if (X.cols() != mean.size())
            throw Error(Errc::LengthMismatch, "column count differs from fitted data");
        return (X.rowwise() - mean).array().rowwise() / scale.array();
    }
};

inline Standardization fit_standardization(const Eigen::MatrixXd& X)
{
    Standardization s;
    s.mean = X.colwise().mean();
    s.scale = ((X.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
        if (!(s.scale[j] > 0.0))
            s.scale[j] = 1.0;
    return s;
}

namespace detail {

inline void require_finite(const Eigen::MatrixXd& X, const char* what)
{
    if (!X.allFinite())
        throw Error(Errc::InvalidArgument, std::string(what) + " has non-finite entries");
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

inline Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
    return out;
}

} // namespace detail

// ---------------------------------------------------------- linear regression

struct LinearModel {
    Eigen::VectorXd weights; // on the standardized scale when `standardization` is set
    double intercept = 0.0;
    double lambda = 0.0;
    std::optional<Standardization> standardization;
};

/// Ridge regression with an unpenalized intercept: solves
/// (Xc^T Xc + lambda I) w = Xc^T yc on column-centred data.
inline LinearModel fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda = 1e-6,
                              bool standardize = false)
{
    if (X.rows() != y.size())
        throw Error(Errc::LengthMismatch, "X rows and y length differ");
    if (X.rows() < 2)
        throw Error(Errc::TooFewRows, "need at least 2 rows");
    if (lambda < 0.0)
        throw Error(Errc::NonPositiveHyperparam, "lambda must be non-negative");
    detail::require_finite(X, "X");
    detail::require_finite(y, "y");

    LinearModel m;
    m.lambda = lambda;
    Eigen::MatrixXd Z = X;
    if (standardize) {
        m.standardization = fit_standardization(X);
        Z = m.standardization->apply(X);
    }
    const Eigen::RowVectorXd zmean = Z.colwise().mean();
    const double ymean = y.mean();
    const Eigen::MatrixXd Zc = Z.rowwise() - zmean;
    Eigen::MatrixXd A = Zc.transpose() * Zc;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd b = Zc.transpose() * (y.array() - ymean).matrix();

    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zc);
        qr.setThreshold(1e-10);
        if (qr.rank() < Zc.cols())
            throw Error(Errc::SingularSystem, "design matrix is rank deficient");
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw Error(Errc::SingularSystem, "normal equations are singular");
    m.weights = ldlt.solve(b);
    m.intercept = ymean - zmean.dot(m.weights);
    return m;
}

inline Eigen::VectorXd predict_linear(const LinearModel& m, const Eigen::MatrixXd& X)
{
    if (X.cols() != m.weights.size())
        throw Error(Errc::LengthMismatch, "feature count differs from model");
    const Eigen::MatrixXd Z = m.standardization ? m.standardization->apply(X) : X;
    return (Z * m.weights).array() + m.intercept;
}

// ---------------------------------------------------------------------- PCA

struct PcaTransform {
    std::vector<Eigen::Index> kept_columns;    // input columns used
    std::vector<Eigen::Index> dropped_columns; // zero-variance columns left out
    std::size_t n_input_columns = 0;
    Standardization standardization;           // over kept columns
    Eigen::MatrixXd components;                // n_components x kept columns, orthonormal rows
    Eigen::VectorXd explained_variance;        // eigenvalues, descending
    double total_variance = 0.0;

    std::size_t n_components() const { return static_cast<std::size_t>(components.rows()); }
    double explained_ratio() const { return total_variance > 0.0 ? explained_variance.sum() / total_variance : 0.0; }
};

/// Standardizes by training mean / std and keeps the top eigenvectors of the
/// covariance. Each component's largest-magnitude entry is made positive.
inline PcaTransform pca_fit(const Eigen::MatrixXd& X, std::size_t n_components = 30)
{
    if (static_cast<std::size_t>(X.rows()) < std::max<std::size_t>(n_components, 2))
        throw Error(Errc::TooFewRows,
                    std::to_string(X.rows()) + " rows for " + std::to_string(n_components) + " components");
    detail::require_finite(X, "X");

    PcaTransform t;
    t.n_input_columns = static_cast<std::size_t>(X.cols());
    const Standardization full = fit_standardization(X);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - full.mean[j]).square().mean();
        (var > 0.0 ? t.kept_columns : t.dropped_columns).push_back(j);
    }
    if (t.kept_columns.size() < n_components)
        throw Error(Errc::InvalidArgument, std::to_string(t.kept_columns.size()) +
                                               " non-constant columns for " + std::to_string(n_components) +
                                               " components");
    Eigen::MatrixXd K(X.rows(), static_cast<Eigen::Index>(t.kept_columns.size()));
    for (std::size_t c = 0; c < t.kept_columns.size(); ++c)
        K.col(static_cast<Eigen::Index>(c)) = X.col(t.kept_columns[c]);
    t.standardization = fit_standardization(K);
    const Eigen::MatrixXd Z = t.standardization.apply(K);
    const Eigen::MatrixXd cov = Z.transpose() * Z / static_cast<double>(X.rows() - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const auto d = cov.rows();
    const auto nc = static_cast<Eigen::Index>(n_components);
    t.components.resize(nc, d);
    t.explained_variance.resize(nc);
    for (Eigen::Index c = 0; c < nc; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0)
            v = -v;
        t.components.row(c) = v.transpose();
        t.explained_variance[c] = std::max(0.0, eig.eigenvalues()[d - 1 - c]);
    }
    t.total_variance = cov.trace();
    return t;
}

namespace detail {

inline Eigen::MatrixXd pca_inputs(const PcaTransform& t, const Eigen::MatrixXd& X)
{
    if (static_cast<std::size_t>(X.cols()) != t.n_input_columns)
        throw Error(Errc::LengthMismatch, "column count differs from fitted data");
    Eigen::MatrixXd K(X.rows(), static_cast<Eigen::Index>(t.kept_columns.size()));
    for (std::size_t c = 0; c < t.kept_columns.size(); ++c)
        K.col(static_cast<Eigen::Index>(c)) = X.col(t.kept_columns[c]);
    return t.standardization.apply(K);
}

} // namespace detail

inline Eigen::MatrixXd pca_apply(const PcaTransform& t, const Eigen::MatrixXd& X)
{
    return detail::pca_inputs(t, X) * t.components.transpose();
}

/// Maps reduced coordinates back to the standardized input space (kept columns).
inline Eigen::MatrixXd pca_reconstruct_standardized(const PcaTransform& t, const Eigen::MatrixXd& reduced)
{
    return reduced * t.components;
}

// ------------------------------------------------------- RBF kernel ridge

struct KernelModel {
    Eigen::MatrixXd train;
    Eigen::VectorXd dual;
    double gamma = 1.0;
    double lambda = 1.0;
};

inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma)
{
    const Eigen::VectorXd an = A.rowwise().squaredNorm();
    const Eigen::VectorXd bn = B.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * A * B.transpose()).colwise() + an;
    d2.rowwise() += bn.transpose();
    return (-gamma * d2.array().max(0.0)).exp().matrix();
}

/// Kernel ridge regression, dual coefficients (K + lambda I)^-1 y with
/// k(u, v) = exp(-gamma |u - v|^2).
inline KernelModel fit_kernel_rbf(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, double gamma)
{
    if (!(lambda > 0.0) || !(gamma > 0.0))
        throw Error(Errc::NonPositiveHyperparam, "lambda and gamma must be positive");
    if (X.rows() != y.size())
        throw Error(Errc::LengthMismatch, "X rows and y length differ");
    if (X.rows() < 2)
        throw Error(Errc::TooFewRows, "need at least 2 rows");
    detail::require_finite(X, "X");
    detail::require_finite(y, "y");
    Eigen::MatrixXd K = rbf_kernel(X, X, gamma);
    K.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    if (ldlt.info() != Eigen::Success)
        throw Error(Errc::SingularSystem, "kernel system is singular");
    return KernelModel{X, ldlt.solve(y), gamma, lambda};
}

inline Eigen::VectorXd predict_kernel(const KernelModel& m, const Eigen::MatrixXd& X)
{
    if (X.cols() != m.train.cols())
        throw Error(Errc::LengthMismatch, "feature count differs from model");
    return rbf_kernel(X, m.train, m.gamma) * m.dual;
}

inline double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    if (a.size() != b.size())
        throw Error(Errc::LengthMismatch, "rmse inputs differ in length");
    return a.size() == 0 ? 0.0 : std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

struct KernelGrid {
    std::vector<double> lambdas{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> gammas{1e-3, 1e-2, 1e-1, 1.0, 10.0};
    double validation_fraction = 0.02;
};

struct TunedKernel {
    KernelModel model; // refit on all rows with the chosen hyperparameters
    double lambda = 0.0;
    double gamma = 0.0;
    double validation_rmse = 0.0;
};

/// Grid search on a seeded validation hold-out (at least one row), then a
/// refit on every row. Ties keep the first grid point (lambda-major order).
inline TunedKernel tune_kernel_rbf(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelGrid& grid,
                                   std::uint64_t seed)
{
    if (X.rows() < 3)
        throw Error(Errc::TooFewRows, "tuning needs at least 3 rows");
    if (grid.lambdas.empty() || grid.gammas.empty())
        throw Error(Errc::InvalidArgument, "empty hyperparameter grid");
    std::vector<std::size_t> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::Rng rng(seed);
    detail::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(grid.validation_fraction * static_cast<double>(X.rows())));
    n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 2);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    const Eigen::MatrixXd Xt = detail::take_rows(X, tr), Xv = detail::take_rows(X, val);
    const Eigen::VectorXd yt = detail::take(y, tr), yv = detail::take(y, val);

    TunedKernel best;
    best.validation_rmse = std::numeric_limits<double>::infinity();
    for (double lambda : grid.lambdas)
        for (double gamma : grid.gammas) {
            const double e = rmse(predict_kernel(fit_kernel_rbf(Xt, yt, lambda, gamma), Xv), yv);
            if (e < best.validation_rmse) {
                best.validation_rmse = e;
                best.lambda = lambda;
                best.gamma = gamma;
            }
        }
    best.model = fit_kernel_rbf(X, y, best.lambda, best.gamma);
    return best;
}

// ---------------------------------------------------- one-vs-rest logistic

struct LogisticConfig {
    double l2 = 1e-3;
    double learning_rate = 0.5;
    std::size_t iterations = 2000;
};

struct OvrClassifier {
    std::vector<int> classes;  // sorted
    Standardization standardization;
    Eigen::MatrixXd weights;   // classes x features (standardized scale)
    Eigen::VectorXd bias;
};

namespace detail {

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

} // namespace detail

/// One binary L2-regularized logistic model per class, full-batch gradient
/// descent on standardized inputs.
inline OvrClassifier fit_ovr_classifier(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                                        const LogisticConfig& cfg = {})
{
    if (static_cast<std::size_t>(X.rows()) != labels.size())
        throw Error(Errc::LengthMismatch, "X rows and label count differ");
    detail::require_finite(X, "X");
    std::map<int, std::size_t> support;
    for (int l : labels)
        ++support[l];
    if (support.size() < 2)
        throw Error(Errc::DegenerateClass, "need at least 2 classes");
    for (const auto& [c, n] : support)
        if (n < 2)
            throw Error(Errc::DegenerateClass, "class " + std::to_string(c) + " has fewer than 2 examples");

    OvrClassifier m;
    for (const auto& [c, n] : support)
        m.classes.push_back(c);
    m.standardization = fit_standardization(X);
    const Eigen::MatrixXd Z = m.standardization.apply(X);
    const double n = static_cast<double>(X.rows());
    const auto C = static_cast<Eigen::Index>(m.classes.size());
    m.weights = Eigen::MatrixXd::Zero(C, X.cols());
    m.bias = Eigen::VectorXd::Zero(C);
    for (Eigen::Index c = 0; c < C; ++c) {
        Eigen::VectorXd t(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            t[i] = labels[static_cast<std::size_t>(i)] == m.classes[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
        double b = 0.0;
        for (std::size_t it = 0; it < cfg.iterations; ++it) {
            Eigen::VectorXd p = ((Z * w).array() + b).unaryExpr([](double z) { return detail::sigmoid(z); });
            const Eigen::VectorXd r = p - t;
            w -= cfg.learning_rate * (Z.transpose() * r / n + cfg.l2 * w);
            b -= cfg.learning_rate * r.mean();
        }
        m.weights.row(c) = w.transpose();
        m.bias[c] = b;
    }
    return m;
}

/// Per-class probabilities (rows: items, columns: classes in sorted order).
inline Eigen::MatrixXd scores(const OvrClassifier& m, const Eigen::MatrixXd& X)
{
    Eigen::MatrixXd z = m.standardization.apply(X) * m.weights.transpose();
    z.rowwise() += m.bias.transpose();
    return z.unaryExpr([](double v) { return detail::sigmoid(v); });
}

inline std::vector<int> predict(const OvrClassifier& m, const Eigen::MatrixXd& X)
{
    const Eigen::MatrixXd s = scores(m, X);
    std::vector<int> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Eigen::Index arg = 0;
        s.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = m.classes[static_cast<std::size_t>(arg)];
    }
    return out;
}

// ------------------------------------------------------------------ metrics

/// Area under the ROC curve from the Mann-Whitney statistic with average
/// ranks for ties: P(s+ > s-) + P(s+ = s-) / 2.
inline double roc_auc(std::span<const double> score, std::span<const int> label)
{
    if (score.size() != label.size())
        throw Error(Errc::LengthMismatch, "scores and labels differ in length");
    std::size_t pos = 0;
    for (int l : label)
        pos += l != 0;
    const std::size_t neg = label.size() - pos;
    if (pos == 0 || neg == 0)
        throw Error(Errc::SingleClass, "both classes must be present");

    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    // twice the rank sum of the positives, ranks starting at 1; stays integral
    double twice_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && score[order[j]] == score[order[i]])
            ++j;
        const double twice_avg_rank = static_cast<double>(i + 1 + j); // (i+1) + j
        for (std::size_t t = i; t < j; ++t)
            if (label[order[t]] != 0)
                twice_rank_sum += twice_avg_rank;
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double twice_u = twice_rank_sum - p * (p + 1.0);
    return (twice_u * 0.5) / (p * static_cast<double>(neg));
}

inline double roc_auc(const std::vector<double>& score, const std::vector<int>& label)
{
    return roc_auc(std::span<const double>(score), std::span<const int>(label));
}

struct ClassF1 {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

/// Per-class scores over the union of true and predicted labels; undefined
/// precision or recall counts as 0.
inline std::vector<ClassF1> f1_per_class(const std::vector<int>& predicted, const std::vector<int>& truth)
{
    if (predicted.size() != truth.size())
        throw Error(Errc::LengthMismatch, "predicted and true labels differ in length");
    if (truth.empty())
        throw Error(Errc::EmptyInput, "no labels");
    std::set<int> labels(truth.begin(), truth.end());
    labels.insert(predicted.begin(), predicted.end());
    std::vector<ClassF1> out;
    for (int c : labels) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool p = predicted[i] == c, t = truth[i] == c;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
        ClassF1 s;
        s.label = c;
        s.support = tp + fn;
        s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        s.f1 = 2 * tp + fp + fn > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
        out.push_back(s);
    }
    return out;
}

/// Per-class F1 weighted by true-class support.
inline double f1_weighted(const std::vector<int>& predicted, const std::vector<int>& truth)
{
    double acc = 0.0;
    for (const auto& c : f1_per_class(predicted, truth))
        acc += c.f1 * static_cast<double>(c.support);
    return acc / static_cast<double>(truth.size());
}

// ------------------------------------------------------ evaluation harnesses

/// Row-labelled numeric table.
struct DesignMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> column_names;
    Eigen::MatrixXd values;
};

struct EmotionResult {
    std::string dimension;
    double rho = 0.0;                  // out-of-fold prediction vs truth
    Eigen::VectorXd weights;           // standardized weights of a fit on all shared rows
    std::vector<std::size_t> by_magnitude; // feature indices by |weight|, descending
};

namespace detail {

/// Row indices of ids present in both tables, in `a` order.
inline std::vector<std::pair<std::size_t, std::size_t>> join_rows(const std::vector<std::string>& a,
                                                                  const std::vector<std::string>& b)
{
    std::map<std::string, std::size_t> bi;
    for (std::size_t i = 0; i < b.size(); ++i)
        bi.emplace(b[i], i);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (auto it = bi.find(a[i]); it != bi.end())
            out.emplace_back(i, it->second);
    return out;
}

} // namespace detail

/// For each target column: k-fold out-of-fold linear predictions from the
/// features (standardized inside each fold), their Pearson correlation with
/// the truth, and standardized weights of a full fit.
inline std::vector<EmotionResult> emotion_report(const DesignMatrix& features, const DesignMatrix& targets,
                                                 std::size_t k = 10, std::uint64_t seed = 0)
{
    const auto joined = detail::join_rows(features.row_ids, targets.row_ids);
    if (joined.size() < 30)
        throw Error(Errc::InsufficientOverlap, std::to_string(joined.size()) + " shared songs, need 30");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(joined.size()), features.values.cols());
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(joined.size()), targets.values.cols());
    for (std::size_t r = 0; r < joined.size(); ++r) {
        X.row(static_cast<Eigen::Index>(r)) = features.values.row(static_cast<Eigen::Index>(joined[r].first));
        Y.row(static_cast<Eigen::Index>(r)) = targets.values.row(static_cast<Eigen::Index>(joined[r].second));
    }
    const FoldAssignment folds = kfold(joined.size(), k, seed);

    std::vector<EmotionResult> out;
    for (Eigen::Index d = 0; d < Y.cols(); ++d) {
        const Eigen::VectorXd y = Y.col(d);
        Eigen::VectorXd oof(y.size());
        for (std::size_t f = 0; f < k; ++f) {
            const auto tr = folds.train_indices(f), te = folds.test_indices(f);
            const LinearModel m = fit_linear(detail::take_rows(X, tr), detail::take(y, tr), 1e-6, true);
            const Eigen::VectorXd p = predict_linear(m, detail::take_rows(X, te));
            for (std::size_t i = 0; i < te.size(); ++i)
                oof[static_cast<Eigen::Index>(te[i])] = p[static_cast<Eigen::Index>(i)];
        }
        EmotionResult r;
        r.dimension = static_cast<std::size_t>(d) < targets.column_names.size()
                          ? targets.column_names[static_cast<std::size_t>(d)]
                          : std::to_string(d);
        r.rho = pearson(oof, y);
        r.weights = fit_linear(X, y, 1e-6, true).weights;
        r.by_magnitude.resize(static_cast<std::size_t>(X.cols()));
        std::iota(r.by_magnitude.begin(), r.by_magnitude.end(), std::size_t{0});
        std::stable_sort(r.by_magnitude.begin(), r.by_magnitude.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(r.weights[static_cast<Eigen::Index>(a)]) > std::abs(r.weights[static_cast<Eigen::Index>(b)]);
        });
        out.push_back(std::move(r));
    }
    return out;
}

struct ClusterResult {
    int label = 0;
    double auc = 0.0; // one-vs-rest, out-of-fold probabilities
    double f1 = 0.0;
    std::size_t support = 0;
};

struct ClusterReport {
    std::vector<ClusterResult> clusters;
    double weighted_f1 = 0.0;
};

/// k-fold out-of-fold one-vs-rest logistic classification of cluster labels.
inline ClusterReport cluster_report(const DesignMatrix& features, const std::vector<std::string>& label_ids,
                                    const std::vector<int>& labels, std::size_t k = 10, std::uint64_t seed = 0,
                                    const LogisticConfig& cfg = {})
{
    if (label_ids.size() != labels.size())
        throw Error(Errc::LengthMismatch, "label ids and labels differ in length");
    const auto joined = detail::join_rows(features.row_ids, label_ids);
    if (joined.size() < 30)
        throw Error(Errc::InsufficientOverlap, std::to_string(joined.size()) + " shared songs, need 30");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(joined.size()), features.values.cols());
    std::vector<int> y(joined.size());
    for (std::size_t r = 0; r < joined.size(); ++r) {
        X.row(static_cast<Eigen::Index>(r)) = features.values.row(static_cast<Eigen::Index>(joined[r].first));
        y[r] = labels[joined[r].second];
    }
    std::vector<int> classes = y;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    const FoldAssignment folds = kfold(joined.size(), k, seed);
    Eigen::MatrixXd oof = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(classes.size()));
    std::vector<int> predicted(y.size());
    for (std::size_t f = 0; f < k; ++f) {
        const auto tr = folds.train_indices(f), te = folds.test_indices(f);
        std::vector<int> ytr;
        for (std::size_t i : tr)
            ytr.push_back(y[i]);
        const OvrClassifier m = fit_ovr_classifier(detail::take_rows(X, tr), ytr, cfg);
        const Eigen::MatrixXd s = scores(m, detail::take_rows(X, te));
        for (std::size_t i = 0; i < te.size(); ++i) {
            double best = -1.0;
            for (std::size_t c = 0; c < m.classes.size(); ++c) {
                const auto col = static_cast<Eigen::Index>(
                    std::lower_bound(classes.begin(), classes.end(), m.classes[c]) - classes.begin());
                const double v = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                oof(static_cast<Eigen::Index>(te[i]), col) = v;
                if (v > best) {
                    best = v;
                    predicted[te[i]] = m.classes[c];
                }
            }
        }
    }

    ClusterReport rep;
    const auto per_class = f1_per_class(predicted, y);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        ClusterResult r;
        r.label = classes[c];
        std::vector<double> s(y.size());
        std::vector<int> bin(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            s[i] = oof(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
            bin[i] = y[i] == classes[c];
        }
        r.auc = roc_auc(s, bin);
        for (const auto& pc : per_class)
            if (pc.label == classes[c]) {
                r.f1 = pc.f1;
                r.support = pc.support;
            }
        rep.clusters.push_back(r);
    }
    rep.weighted_f1 = f1_weighted(predicted, y);
    return rep;
}

} // namespace midlevel

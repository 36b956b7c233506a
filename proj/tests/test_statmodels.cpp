#include "midlevel/statmodels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace midlevel;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    detail::Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = detail::normal(rng);
    return m;
}

template <class F>
Errc code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no exception";
    return Errc::InvalidArgument;
}

} // namespace

// ------------------------------------------------------------------ pearson

TEST(Pearson, Lines)
{
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y, z;
    for (double v : x) {
        y.push_back(2 * v + 1);
        z.push_back(-v);
    }
    EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
    EXPECT_NEAR(pearson(x, z), -1.0, 1e-15);
}

TEST(Pearson, FrozenFivePoint)
{
    std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 6};
    EXPECT_NEAR(pearson(x, y), 0.8219949365267863, 1e-14);
}

TEST(Pearson, IndependentUniforms)
{
    detail::Rng rng(17);
    std::vector<double> x(10000), y(10000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = detail::uniform01(rng);
        y[i] = detail::uniform01(rng);
    }
    EXPECT_LT(std::abs(pearson(x, y)), 0.05);
}

TEST(Pearson, AffineInvariance)
{
    detail::Rng rng(4);
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = detail::normal(rng);
        y[i] = 0.5 * x[i] + detail::normal(rng);
    }
    const double r = pearson(x, y);
    for (int t = 0; t < 10; ++t) {
        const double a = detail::uniform(rng, 0.1, 10), b = detail::uniform(rng, -5, 5);
        std::vector<double> xa(x.size()), yn(y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xa[i] = a * x[i] + b;
            yn[i] = -y[i];
        }
        EXPECT_NEAR(pearson(xa, y), r, 1e-12);
        EXPECT_NEAR(pearson(x, yn), -r, 1e-12);
    }
}

TEST(Pearson, Errors)
{
    std::vector<double> a{1, 2, 3}, b{1, 2}, c{4, 4, 4};
    EXPECT_EQ(code_of([&] { pearson(a, b); }), Errc::LengthMismatch);
    EXPECT_EQ(code_of([&] { pearson(a, c); }), Errc::ConstantInput);
}

// ------------------------------------------------------------------- splits

TEST(KFold, Singletons)
{
    auto f = kfold(10, 10, 3);
    for (std::size_t k = 0; k < 10; ++k)
        EXPECT_EQ(f.test_indices(k).size(), 1u);
}

TEST(KFold, Sizes103)
{
    auto f = kfold(103, 10, 3);
    std::vector<std::size_t> sizes;
    for (std::size_t k = 0; k < 10; ++k)
        sizes.push_back(f.test_indices(k).size());
    EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 11u), 3);
    EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 10u), 7);
}

TEST(KFold, DeterministicAndCovering)
{
    auto a = kfold(57, 5, 99), b = kfold(57, 5, 99), c = kfold(57, 5, 100);
    EXPECT_EQ(a.fold, b.fold);
    EXPECT_NE(a.fold, c.fold);
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_EQ(a.test_indices(k).size() + a.train_indices(k).size(), 57u);
    EXPECT_EQ(code_of([] { kfold(9, 10, 0); }), Errc::TooFewItems);
}

TEST(GroupedSplit, Singletons)
{
    std::vector<std::string> g;
    for (int i = 0; i < 100; ++i)
        g.push_back("p" + std::to_string(i));
    auto s = grouped_split(g, 0.08, 1);
    EXPECT_EQ(s.test.size(), 8u);
    EXPECT_EQ(s.train.size(), 92u);
    EXPECT_FALSE(s.unreachable);
}

TEST(GroupedSplit, TwoHalvesFlagged)
{
    std::vector<std::string> g(100, "a");
    std::fill(g.begin() + 50, g.end(), "b");
    auto s = grouped_split(g, 0.08, 1);
    EXPECT_EQ(s.test.size(), 50u);
    EXPECT_DOUBLE_EQ(s.test_fraction, 0.5);
    EXPECT_TRUE(s.unreachable);
}

TEST(GroupedSplit, NoGroupStraddles)
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        detail::Rng rng(seed);
        std::vector<std::string> g;
        for (int i = 0; i < 400; ++i)
            g.push_back("artist" + std::to_string(detail::uniform_index(rng, 80)));
        auto s = grouped_split(g, 0.08, seed);
        std::set<std::string> tr, te;
        for (auto i : s.train)
            tr.insert(g[i]);
        for (auto i : s.test)
            te.insert(g[i]);
        for (const auto& x : te)
            EXPECT_FALSE(tr.count(x)) << x;
        EXPECT_EQ(s.train.size() + s.test.size(), g.size());
        EXPECT_FALSE(s.test.empty());
        EXPECT_FALSE(s.unreachable) << s.test_fraction;
    }
}

TEST(GroupedSplit, ArtistCap)
{
    // at most 5 songs per artist: the test side holds at most 5 per test group
    std::vector<std::string> g;
    for (int a = 0; a < 60; ++a)
        for (int k = 0; k < 1 + a % 5; ++k)
            g.push_back("a" + std::to_string(a));
    auto s = grouped_split(g, 0.08, 5);
    std::set<std::string> groups;
    for (auto i : s.test)
        groups.insert(g[i]);
    EXPECT_LE(s.test.size(), 5 * groups.size());
}

TEST(GroupedSplit, Errors)
{
    EXPECT_EQ(code_of([] { grouped_split(std::vector<std::string>(10, "x"), 0.08, 0); }), Errc::TooFewGroups);
    EXPECT_EQ(code_of([] { grouped_split({"a", "b"}, {"a"}, 0.08, 0); }), Errc::LengthMismatch);
}

// ------------------------------------------------------------------- linear

TEST(Linear, RealizableTarget)
{
    Eigen::MatrixXd X = gaussian(60, 4, 1);
    Eigen::Vector4d w(1.5, -2, 0.25, 3);
    Eigen::VectorXd y = (X * w).array() + 0.7;
    auto m = fit_linear(X, y);
    EXPECT_LT((predict_linear(m, X) - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Linear, TwoPointLine)
{
    Eigen::MatrixXd X(2, 1);
    X << 0, 1;
    Eigen::VectorXd y(2);
    y << 1, 3;
    auto m = fit_linear(X, y);
    EXPECT_NEAR(m.weights[0], 2.0, 1e-5);
    EXPECT_NEAR(m.intercept, 1.0, 1e-5);
    EXPECT_NEAR(m.weights[0], 1.0 / (0.5 + 1e-6), 1e-12);
}

TEST(Linear, RidgeLimit)
{
    Eigen::MatrixXd X = gaussian(40, 3, 2);
    Eigen::VectorXd y = X.col(0) * 4.0 + Eigen::VectorXd::Constant(40, 2.0);
    auto m = fit_linear(X, y, 1e12);
    EXPECT_LT(m.weights.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((predict_linear(m, X).array() - y.mean()).abs().maxCoeff(), 1e-6);
}

TEST(Linear, StandardizationRescaleInvariance)
{
    Eigen::MatrixXd X = gaussian(50, 3, 3);
    Eigen::VectorXd y = X * Eigen::Vector3d(1, -1, 2) + gaussian(50, 1, 4).col(0) * 0.1;
    auto m = fit_linear(X, y, 1e-6, true);
    const Eigen::VectorXd p = predict_linear(m, X);
    // rescale feature 1 by a, shift by b, and adjust the stored constants jointly
    const double a = 37.5, b = -4.0;
    Eigen::MatrixXd X2 = X;
    X2.col(1) = X.col(1) * a + Eigen::VectorXd::Constant(50, b);
    auto m2 = m;
    m2.standardization->mean[1] = m.standardization->mean[1] * a + b;
    m2.standardization->scale[1] = m.standardization->scale[1] * a;
    EXPECT_LT((predict_linear(m2, X2) - p).cwiseAbs().maxCoeff(), 1e-10);
    // refitting on rescaled data gives the same standardized weights
    auto m3 = fit_linear(X2, y, 1e-6, true);
    EXPECT_LT((m3.weights - m.weights).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Linear, Singular)
{
    Eigen::MatrixXd X(10, 2);
    for (int i = 0; i < 10; ++i)
        X.row(i) << i, 2 * i;
    Eigen::VectorXd y = X.col(0);
    EXPECT_EQ(code_of([&] { fit_linear(X, y, 0.0); }), Errc::SingularSystem);
    EXPECT_NO_THROW(fit_linear(X, y, 1e-6));
}

// ---------------------------------------------------------------------- PCA

TEST(Pca, LineIn3d)
{
    detail::Rng rng(8);
    Eigen::MatrixXd X(100, 3);
    for (int i = 0; i < 100; ++i) {
        const double t = detail::normal(rng);
        X.row(i) << 2 * t + 1, -t, 0.5 * t + 3;
    }
    auto p = pca_fit(X, 1);
    EXPECT_GE(p.explained_ratio(), 0.999);
}

TEST(Pca, Orthonormal)
{
    Eigen::MatrixXd X = gaussian(200, 40, 9) * gaussian(40, 40, 10);
    auto p = pca_fit(X, 30);
    const Eigen::MatrixXd g = p.components * p.components.transpose();
    EXPECT_LT((g - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(pca_apply(p, X).cols(), 30);
    for (Eigen::Index i = 0; i + 1 < p.explained_variance.size(); ++i)
        EXPECT_GE(p.explained_variance[i], p.explained_variance[i + 1]);
}

TEST(Pca, BeatsRandomProjections)
{
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Eigen::MatrixXd X = gaussian(150, 8, seed) * gaussian(8, 8, seed + 100);
        auto p = pca_fit(X, 3);
        const Eigen::MatrixXd Z = detail::pca_inputs(p, X);
        const double err = (Z - pca_reconstruct_standardized(p, pca_apply(p, X))).squaredNorm();
        for (std::uint64_t r = 0; r < 20; ++r) {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(8, 3, seed * 1000 + r));
            const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(8, 3);
            const double other = (Z - Z * Q * Q.transpose()).squaredNorm();
            EXPECT_LE(err, other + 1e-9);
        }
    }
}

TEST(Pca, UsesTrainingStatistics)
{
    Eigen::MatrixXd X = gaussian(50, 4, 21);
    auto p = pca_fit(X, 2);
    Eigen::MatrixXd shifted = X.array() + 10.0;
    // applying to shifted data does not re-centre
    EXPECT_GT((pca_apply(p, shifted) - pca_apply(p, X)).cwiseAbs().maxCoeff(), 1.0);
}

TEST(Pca, DropsConstantColumns)
{
    Eigen::MatrixXd X = gaussian(30, 4, 22);
    X.col(2).setConstant(5.0);
    auto p = pca_fit(X, 2);
    ASSERT_EQ(p.dropped_columns.size(), 1u);
    EXPECT_EQ(p.dropped_columns[0], 2);
    EXPECT_EQ(p.components.cols(), 3);
}

TEST(Pca, TooFewRows)
{
    EXPECT_EQ(code_of([] { pca_fit(gaussian(10, 40, 1), 30); }), Errc::TooFewRows);
}

// ------------------------------------------------------------------- kernel

namespace {

struct SineData {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

SineData sine_data(int n, std::uint64_t seed, double noise)
{
    detail::Rng rng(seed);
    SineData d{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        d.x(i, 0) = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
        d.y[i] = std::sin(d.x(i, 0)) + noise * detail::normal(rng);
    }
    return d;
}

} // namespace

TEST(Kernel, InterpolationLimit)
{
    auto d = sine_data(20, 1, 0.0);
    auto m = fit_kernel_rbf(d.x, d.y, 1e-10, 1.0);
    EXPECT_LT((predict_kernel(m, d.x) - d.y).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Kernel, FlatKernelPredictsMean)
{
    auto d = sine_data(30, 2, 0.1);
    auto m = fit_kernel_rbf(d.x, d.y, 1e-3, 1e-9);
    Eigen::MatrixXd q(3, 1);
    q << 0.1, 3.0, 5.9;
    EXPECT_LT((predict_kernel(m, q).array() - d.y.mean()).abs().maxCoeff(), 1e-3);
}

TEST(Kernel, TunedSineRegression)
{
    auto tr = sine_data(50, 3, 0.05);
    auto te = sine_data(50, 4, 0.0);
    KernelGrid grid;
    grid.validation_fraction = 0.2;
    auto t = tune_kernel_rbf(tr.x, tr.y, grid, 7);
    EXPECT_LT(rmse(predict_kernel(t.model, te.x), te.y), 0.1);
    EXPECT_EQ(t.model.dual.size(), 50);
}

TEST(Kernel, TrainingErrorMonotoneInLambda)
{
    auto d = sine_data(40, 5, 0.2);
    double prev = -1.0;
    for (double lambda : {1e-6, 1e-4, 1e-2, 1e-1, 1.0, 10.0}) {
        const double e = rmse(predict_kernel(fit_kernel_rbf(d.x, d.y, lambda, 0.5), d.x), d.y);
        EXPECT_GE(e, prev - 1e-12);
        prev = e;
    }
}

TEST(Kernel, Errors)
{
    auto d = sine_data(5, 6, 0.0);
    EXPECT_EQ(code_of([&] { fit_kernel_rbf(d.x, d.y, 0.0, 1.0); }), Errc::NonPositiveHyperparam);
    EXPECT_EQ(code_of([&] { fit_kernel_rbf(d.x, d.y, 1.0, -1.0); }), Errc::NonPositiveHyperparam);
}

// --------------------------------------------------------------- classifier

namespace {

struct Blobs {
    Eigen::MatrixXd X;
    std::vector<int> y;
};

Blobs blobs(int per_class, const std::vector<Eigen::Vector2d>& centres, double spread, std::uint64_t seed)
{
    detail::Rng rng(seed);
    Blobs b{Eigen::MatrixXd(per_class * static_cast<int>(centres.size()), 2), {}};
    int r = 0;
    for (std::size_t c = 0; c < centres.size(); ++c)
        for (int i = 0; i < per_class; ++i, ++r) {
            b.X(r, 0) = centres[c][0] + spread * detail::normal(rng);
            b.X(r, 1) = centres[c][1] + spread * detail::normal(rng);
            b.y.push_back(static_cast<int>(c) + 1);
        }
    return b;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b)
{
    std::size_t hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        hit += a[i] == b[i];
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

} // namespace

TEST(Classifier, SeparableTwoClass)
{
    auto b = blobs(40, {{-3, 0}, {3, 0}}, 0.5, 1);
    auto m = fit_ovr_classifier(b.X, b.y);
    EXPECT_EQ(accuracy(predict(m, b.X), b.y), 1.0);
}

TEST(Classifier, ScoresAreProbabilities)
{
    auto b = blobs(30, {{0, 0}, {2, 2}, {-2, 2}}, 1.0, 2);
    auto m = fit_ovr_classifier(b.X, b.y);
    auto s = scores(m, b.X);
    EXPECT_EQ(s.cols(), 3);
    EXPECT_GT(s.minCoeff(), 0.0);
    EXPECT_LT(s.maxCoeff(), 1.0);
}

TEST(Classifier, ThreeBlobs)
{
    auto tr = blobs(60, {{0, 0}, {4, 0}, {2, 3.5}}, 0.8, 3);
    auto te = blobs(60, {{0, 0}, {4, 0}, {2, 3.5}}, 0.8, 4);
    auto m = fit_ovr_classifier(tr.X, tr.y);
    EXPECT_GT(accuracy(predict(m, te.X), te.y), 0.9);
}

TEST(Classifier, DegenerateClass)
{
    auto b = blobs(5, {{0, 0}, {3, 3}}, 0.5, 5);
    b.y.back() = 9;
    EXPECT_EQ(code_of([&] { fit_ovr_classifier(b.X, b.y); }), Errc::DegenerateClass);
    std::vector<int> one(b.y.size(), 1);
    EXPECT_EQ(code_of([&] { fit_ovr_classifier(b.X, one); }), Errc::DegenerateClass);
}

// ------------------------------------------------------------------ metrics

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& l)
{
    double gt = 0.0, tie = 0.0, np = 0.0, nn = 0.0;
    for (int v : l)
        (v ? np : nn) += 1.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (l[i] && !l[j]) {
                gt += s[i] > s[j];
                tie += s[i] == s[j];
            }
    return (gt + 0.5 * tie) / (np * nn);
}

} // namespace

TEST(Auc, Separated)
{
    EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
    EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0}), 0.0);
}

TEST(Auc, MatchesBruteForceExactly)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        detail::Rng rng(seed);
        std::vector<double> s(200);
        std::vector<int> l(200);
        for (std::size_t i = 0; i < s.size(); ++i) {
            // coarse grid forces ties
            s[i] = seed % 2 ? std::floor(detail::uniform01(rng) * 20) / 20 : detail::uniform01(rng);
            l[i] = detail::uniform01(rng) < 0.4;
        }
        EXPECT_EQ(roc_auc(s, l), brute_auc(s, l)) << seed;
    }
}

TEST(Auc, IndependentLabels)
{
    detail::Rng rng(33);
    std::vector<double> s(2000);
    std::vector<int> l(2000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = detail::uniform01(rng);
        l[i] = detail::uniform01(rng) < 0.5;
    }
    EXPECT_NEAR(roc_auc(s, l), 0.5, 0.03);
}

TEST(Auc, MonotoneTransformInvariance)
{
    detail::Rng rng(34);
    std::vector<double> s(300), t(300);
    std::vector<int> l(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
        l[i] = detail::uniform01(rng) < 0.3;
        s[i] = detail::normal(rng) + l[i];
        t[i] = std::exp(3.0 * s[i]) + 7.0;
    }
    EXPECT_EQ(roc_auc(s, l), roc_auc(t, l));
}

TEST(Auc, SingleClass)
{
    EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}); }), Errc::SingleClass);
}

TEST(F1, Values)
{
    EXPECT_EQ(f1_weighted({1, 2, 3, 1}, {1, 2, 3, 1}), 1.0);
    EXPECT_DOUBLE_EQ(f1_weighted({1, 0, 1, 0}, {1, 1, 0, 0}), 0.5);
    EXPECT_NEAR(f1_weighted({1, 1, 1, 1}, {1, 1, 1, 0}), 18.0 / 28.0, 1e-15);
    EXPECT_NEAR(f1_weighted({1, 2, 2, 2, 3, 1, 1}, {1, 1, 2, 2, 3, 3, 3}), 0.5571428571428572, 1e-15);
}

TEST(F1, BalancedBinaryEqualsPlain)
{
    detail::Rng rng(40);
    for (int t = 0; t < 20; ++t) {
        std::vector<int> truth, pred;
        for (int i = 0; i < 50; ++i) {
            truth.push_back(i < 25);
            pred.push_back(detail::uniform01(rng) < 0.5);
        }
        const auto per = f1_per_class(pred, truth);
        const double plain = (per[0].f1 + per[1].f1) / 2.0;
        const double w = f1_weighted(pred, truth);
        EXPECT_NEAR(w, plain, 1e-15);
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, 1.0);
    }
}

TEST(F1, LengthMismatch)
{
    EXPECT_EQ(code_of([] { f1_weighted({1, 2}, {1}); }), Errc::LengthMismatch);
}

// ---------------------------------------------------------------- harnesses

TEST(Emotion, RealizableTargets)
{
    DesignMatrix feats, targets;
    feats.values = gaussian(80, 7, 50).array() + 5.0;
    targets.values.resize(80, 2);
    const Eigen::VectorXd noise = gaussian(80, 1, 51).col(0);
    targets.values.col(0) = feats.values * (Eigen::VectorXd(7) << 1, 0, 0, 0, -2, 0, 3).finished() + 0.05 * noise;
    targets.values.col(1) = feats.values.col(1) * 0.5 - 0.05 * noise;
    for (int i = 0; i < 80; ++i)
        feats.row_ids.push_back("s" + std::to_string(i));
    // target rows in a different order plus unmatched ids
    for (int i = 79; i >= 0; --i)
        targets.row_ids.push_back("s" + std::to_string(i));
    targets.values = targets.values.colwise().reverse().eval();
    targets.column_names = {"valence", "energy"};

    auto rep = emotion_report(feats, targets, 10, 1);
    ASSERT_EQ(rep.size(), 2u);
    EXPECT_EQ(rep[0].dimension, "valence");
    EXPECT_GT(rep[0].rho, 0.95);
    EXPECT_GT(rep[1].rho, 0.95);
    EXPECT_EQ(rep[0].by_magnitude[0], 6u);
    EXPECT_EQ(rep[0].by_magnitude[1], 4u);
    EXPECT_LT(rep[0].weights[4], 0.0);
    EXPECT_EQ(rep[1].by_magnitude[0], 1u);
    auto again = emotion_report(feats, targets, 10, 1);
    EXPECT_EQ(again[0].rho, rep[0].rho);
}

TEST(Emotion, InsufficientOverlap)
{
    DesignMatrix a, b;
    a.values = gaussian(20, 7, 1);
    b.values = gaussian(20, 1, 2);
    for (int i = 0; i < 20; ++i) {
        a.row_ids.push_back(std::to_string(i));
        b.row_ids.push_back(std::to_string(i));
    }
    EXPECT_EQ(code_of([&] { emotion_report(a, b); }), Errc::InsufficientOverlap);
}

TEST(Clusters, SeparableFiveClusters)
{
    DesignMatrix feats;
    detail::Rng rng(60);
    const int per = 20;
    feats.values.resize(5 * per, 7);
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < per; ++i) {
            const int r = c * per + i;
            for (int j = 0; j < 7; ++j)
                feats.values(r, j) = (j == c ? 4.0 : 0.0) + 0.5 * detail::normal(rng);
            feats.row_ids.push_back("s" + std::to_string(r));
            ids.push_back("s" + std::to_string(r));
            labels.push_back(c + 1);
        }
    auto rep = cluster_report(feats, ids, labels, 10, 3);
    ASSERT_EQ(rep.clusters.size(), 5u);
    for (const auto& c : rep.clusters) {
        EXPECT_GT(c.auc, 0.95) << c.label;
        EXPECT_EQ(c.support, static_cast<std::size_t>(per));
    }
    EXPECT_GT(rep.weighted_f1, 0.9);
}

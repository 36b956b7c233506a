#pragma once

// Annotation mathematics: pairwise-comparison ranking, anchor scales, rating
// aggregation, worker screening and agreement statistics.

#include "midlevel/detail/moments.hpp"
#include "midlevel/detail/random.hpp"
#include "midlevel/error.hpp"
#include "midlevel/names.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace midlevel {

enum class Winner { A, B };

struct ComparisonRecord {
    std::string worker_id;
    MidLevelName feature = MidLevelName::Melodiousness;
    std::string song_a;
    std::string song_b;
    Winner winner = Winner::A;

    bool operator==(const ComparisonRecord&) const = default;
};

struct RatingRecord {
    std::string worker_id;
    std::string song_id;
    MidLevelName feature = MidLevelName::Melodiousness;
    int rating = 1; // 1..9

    bool operator==(const RatingRecord&) const = default;
};

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 9;

/// Averaged ratings of one song. Absent features have no value and zero count.
struct MidLevelVector {
    std::string song_id;
    std::array<std::optional<double>, kMidLevelCount> values{};
    std::array<std::size_t, kMidLevelCount> n_ratings{};

    std::optional<double> operator[](MidLevelName n) const { return values[index_of(n)]; }
    bool complete() const
    {
        return std::all_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
    }

    bool operator==(const MidLevelVector&) const = default;
};

struct RankedSong {
    std::string song_id;
    double win_fraction = 0.0;
    std::size_t wins = 0;
    std::size_t appearances = 0;
};

struct AnchorScale {
    MidLevelName feature = MidLevelName::Melodiousness;
    std::array<std::string, 9> anchors; // lowest (1) to highest (9)
};

struct WorkerStats {
    std::string worker_id;
    std::size_t n_ratings = 0;    // all ratings by the worker
    std::size_t n_evaluated = 0;  // ratings on songs present in the golden table
    double mean_abs_dev_from_song_mean = 0.0;
    double dev_std = 0.0;         // sample std of (rating - golden mean); 0 below 2 evaluated ratings
    bool evaluated = false;
    bool banned = false;
};

/// Size of a full pairwise comparison matrix without self-pairs: (n^2 - n) / 2.
constexpr std::uint64_t comparisons_needed(std::uint64_t n) noexcept { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Songs ordered by the fraction of their comparisons they won (descending;
/// ties by song id). Only comparisons on `feature` are counted.
inline std::vector<RankedSong> win_rate_ranking(const std::vector<ComparisonRecord>& comparisons, MidLevelName feature)
{
    if (comparisons.empty())
        throw Error(Errc::EmptyInput, "no comparisons");
    std::map<std::string, RankedSong> tally;
    for (const auto& c : comparisons) {
        if (c.feature != feature)
            continue;
        detail::require(c.song_a != c.song_b, Errc::SelfComparison, "song compared with itself: " + c.song_a);
        auto& a = tally[c.song_a];
        auto& b = tally[c.song_b];
        a.song_id = c.song_a;
        b.song_id = c.song_b;
        ++a.appearances;
        ++b.appearances;
        ++(c.winner == Winner::A ? a : b).wins;
    }
    std::vector<RankedSong> ranking;
    ranking.reserve(tally.size());
    for (auto& [id, song] : tally) {
        song.win_fraction = static_cast<double>(song.wins) / static_cast<double>(song.appearances);
        ranking.push_back(song);
    }
    std::stable_sort(ranking.begin(), ranking.end(), [](const RankedSong& x, const RankedSong& y) {
        if (x.win_fraction != y.win_fraction)
            return x.win_fraction > y.win_fraction;
        return x.song_id < y.song_id;
    });
    return ranking;
}

/// Nine anchors at evenly spaced quantiles of a ranking, lowest first:
/// ascending positions round(i * (n - 1) / 8), i = 0..8.
inline AnchorScale build_anchor_scale(const std::vector<RankedSong>& ranking, MidLevelName feature)
{
    const std::size_t n = ranking.size();
    if (n < 9)
        throw Error(Errc::TooFewSongs, "anchor scale needs 9 ranked songs, got " + std::to_string(n));
    AnchorScale scale{feature, {}};
    for (std::size_t i = 0; i < 9; ++i) {
        const std::size_t pos = (2 * i * (n - 1) + 8) / 16; // round half up
        scale.anchors[i] = ranking[n - 1 - pos].song_id;    // ranking is descending
    }
    return scale;
}

/// Per (song, feature) arithmetic mean of ratings, songs in id order.
inline std::vector<MidLevelVector> aggregate_ratings(const std::vector<RatingRecord>& records)
{
    struct Acc {
        std::array<double, kMidLevelCount> sum{};
        std::array<std::size_t, kMidLevelCount> count{};
    };
    std::map<std::string, Acc> songs;
    for (const auto& r : records) {
        auto& acc = songs[r.song_id];
        acc.sum[index_of(r.feature)] += r.rating;
        ++acc.count[index_of(r.feature)];
    }
    std::vector<MidLevelVector> out;
    out.reserve(songs.size());
    for (const auto& [id, acc] : songs) {
        MidLevelVector v;
        v.song_id = id;
        for (std::size_t f = 0; f < kMidLevelCount; ++f) {
            v.n_ratings[f] = acc.count[f];
            if (acc.count[f] > 0)
                v.values[f] = acc.sum[f] / static_cast<double>(acc.count[f]);
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Cronbach's alpha of a complete raters x items matrix:
///   k / (k - 1) * (1 - sum_r var(row r) / var(column sums)),
/// with population variances and k = number of raters. NaN cells count as
/// missing. The result may be negative.
inline double cronbach_alpha(const Eigen::MatrixXd& ratings)
{
    const auto k = ratings.rows();
    const auto items = ratings.cols();
    if (k < 2 || items < 2)
        throw Error(Errc::IncompleteMatrix, "need at least 2 raters and 2 items");
    if (!ratings.allFinite())
        throw Error(Errc::IncompleteMatrix, "rating matrix has missing cells");

    const auto pop_var = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); };
    double rater_var = 0.0;
    for (Eigen::Index r = 0; r < k; ++r)
        rater_var += pop_var(ratings.row(r).transpose());
    const double total_var = pop_var(ratings.colwise().sum().transpose());
    if (!(total_var > 0.0))
        throw Error(Errc::DegenerateVariance, "column sums have zero variance");
    const double kd = static_cast<double>(k);
    return kd / (kd - 1.0) * (1.0 - rater_var / total_var);
}

/// Builds a complete pseudo-rater matrix for one feature: every song with at
/// least `n_raters` ratings contributes one column, its ratings shuffled
/// (seeded) into rater slots and truncated to `n_raters`.
inline Eigen::MatrixXd pseudo_rater_matrix(const std::vector<RatingRecord>& records, MidLevelName feature,
                                           std::size_t n_raters, std::uint64_t seed)
{
    std::map<std::string, std::vector<int>> per_song;
    for (const auto& r : records)
        if (r.feature == feature)
            per_song[r.song_id].push_back(r.rating);
    detail::Rng rng(seed);
    std::vector<std::vector<int>> columns;
    for (auto& [id, ratings] : per_song) {
        if (ratings.size() < n_raters)
            continue;
        detail::shuffle(ratings.begin(), ratings.end(), rng);
        columns.push_back(ratings);
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n_raters), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
        for (std::size_t r = 0; r < n_raters; ++r)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
    return m;
}

struct ScreeningThresholds {
    double max_mean_abs_dev = 2.5; // banned above
    double max_dev_std = 2.3;      // banned at or above; uniform guessing on 1..9 gives ~2.58
};

/// Compares each worker's ratings with a trusted table of per-song means.
/// Workers without overlap with the table are reported but not banned.
inline std::vector<WorkerStats> screen_workers(const std::vector<RatingRecord>& records,
                                               const std::vector<MidLevelVector>& golden,
                                               const ScreeningThresholds& thresholds = {})
{
    std::map<std::string, const MidLevelVector*> gold;
    for (const auto& g : golden)
        gold[g.song_id] = &g;

    std::map<std::string, std::vector<const RatingRecord*>> by_worker;
    for (const auto& r : records)
        by_worker[r.worker_id].push_back(&r);

    std::vector<WorkerStats> out;
    for (const auto& [worker, ratings] : by_worker) {
        WorkerStats s;
        s.worker_id = worker;
        s.n_ratings = ratings.size();
        std::vector<double> devs;
        for (const RatingRecord* r : ratings) {
            auto it = gold.find(r->song_id);
            if (it == gold.end())
                continue;
            if (auto m = (*it->second)[r->feature])
                devs.push_back(r->rating - *m);
        }
        s.n_evaluated = devs.size();
        s.evaluated = !devs.empty();
        if (s.evaluated) {
            double abs_sum = 0.0;
            for (double d : devs)
                abs_sum += std::abs(d);
            s.mean_abs_dev_from_song_mean = abs_sum / static_cast<double>(devs.size());
            if (devs.size() >= 2) {
                const double n = static_cast<double>(devs.size());
                s.dev_std = std::sqrt(detail::population_variance(devs) * n / (n - 1.0));
            }
            s.banned = s.mean_abs_dev_from_song_mean > thresholds.max_mean_abs_dev ||
                       (devs.size() >= 2 && s.dev_std >= thresholds.max_dev_std);
        }
        out.push_back(std::move(s));
    }
    return out;
}

using FeatureCorrelation = Eigen::Matrix<double, 7, 7>;

/// Pearson correlations between the seven features over songs that have all
/// seven values.
inline FeatureCorrelation correlation_matrix(const std::vector<MidLevelVector>& vectors)
{
    std::array<std::vector<double>, kMidLevelCount> cols;
    for (const auto& v : vectors) {
        if (!v.complete())
            continue;
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            cols[f].push_back(*v.values[f]);
    }
    if (cols[0].size() < 3)
        throw Error(Errc::TooFewSongs, "correlation needs 3 complete songs, got " + std::to_string(cols[0].size()));
    for (std::size_t f = 0; f < kMidLevelCount; ++f)
        if (!(detail::population_variance(cols[f]) > 0.0))
            throw Error(Errc::ConstantFeature, std::string(to_string(kMidLevelNames[f])) + " has zero variance");

    FeatureCorrelation r = FeatureCorrelation::Identity();
    for (std::size_t i = 0; i < kMidLevelCount; ++i)
        for (std::size_t j = i + 1; j < kMidLevelCount; ++j) {
            const double c = detail::correlation(cols[i], cols[j]);
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
            r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
        }
    return r;
}

} // namespace midlevel

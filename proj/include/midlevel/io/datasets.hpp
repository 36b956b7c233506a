#pragma once

// Loaders and writers for the canonical CSV/JSON layouts described in
// docs/formats.md. Row-level problems are collected with their source line;
// loaders never return a partially valid record.

#include "midlevel/annotation.hpp"
#include "midlevel/extractors.hpp"
#include "midlevel/io/csv.hpp"
#include "midlevel/statmodels.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace midlevel::io {

struct RowError {
    std::size_t line = 0; // 1-based, header is line 1
    Errc code = Errc::InvalidArgument;
    std::string message;
};

template <class T>
struct Loaded {
    T data{};
    std::vector<RowError> errors;
    std::vector<std::string> warnings;

    bool clean() const { return errors.empty(); }

    /// Throws the first row error, mentioning how many rows were rejected.
    const T& require_clean(std::string_view source = "") const
    {
        if (!errors.empty()) {
            const RowError& e = errors.front();
            throw Error(e.code, std::string(source) + (source.empty() ? "" : ": ") + std::to_string(errors.size()) +
                                    " row(s) rejected; line " + std::to_string(e.line) + ": " + e.message);
        }
        return data;
    }
};

enum class Format { Csv, Json };

inline Format parse_format(std::string_view s)
{
    if (s == "csv")
        return Format::Csv;
    if (s == "json")
        return Format::Json;
    throw Error(Errc::InvalidArgument, "format must be csv or json, got '" + std::string(s) + "'");
}

inline constexpr std::string_view kDefaultDatasetUrl = "https://osf.io/5aupt/";

// ------------------------------------------------------------ column names

/// Maps a header cell to its canonical name. This is the only place that
/// knows about the spellings used by the released annotation archive and
/// by third-party emotion tables; unrecognized names come back lowercased.
inline std::string canonical_column(std::string_view raw)
{
    std::string key;
    for (char c : trim(raw)) {
        if (c == ' ' || c == '-' || c == '.')
            key.push_back('_');
        else
            key.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    }
    static const std::map<std::string, std::string, std::less<>> aliases = {
        {"song", "song_id"},       {"songid", "song_id"},       {"id", "song_id"},
        {"track_id", "song_id"},   {"song_ids", "song_id"},     {"worker", "worker_id"},
        {"workerid", "worker_id"}, {"annotator", "worker_id"},  {"annotator_id", "worker_id"},
        {"user_id", "worker_id"},  {"question", "feature"},     {"attribute", "feature"},
        {"score", "rating"},       {"answer", "rating"},        {"value", "rating"},
        {"happiness", "happy"},    {"sadness", "sad"},          {"tenderness", "tender"},
        {"label", "cluster"},      {"mirex_cluster", "cluster"}, {"artist", "artist_id"},
        {"path", "audio_path"},    {"file", "audio_path"},
    };
    if (auto it = aliases.find(key); it != aliases.end())
        return it->second;
    if (auto n = parse_midlevel_name(key))
        return std::string(to_string(*n));
    return key;
}

namespace detail {

inline std::vector<std::string> canonical_header(const CsvTable& t)
{
    std::vector<std::string> h;
    for (const auto& c : t.header)
        h.push_back(canonical_column(c));
    return h;
}

inline std::optional<std::size_t> find(const std::vector<std::string>& header, std::string_view name)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return i;
    return std::nullopt;
}

inline std::size_t require_column(const std::vector<std::string>& header, std::string_view name, std::string_view what)
{
    if (auto i = find(header, name))
        return *i;
    throw Error(Errc::UnknownSchema, std::string(what) + " needs a '" + std::string(name) + "' column");
}

/// Rows must have exactly as many cells as the header.
inline bool check_width(const CsvTable& t, std::size_t r, std::vector<RowError>& errors)
{
    if (t.rows[r].size() == t.header.size())
        return true;
    errors.push_back({t.lines[r], Errc::CorruptFile,
                      std::to_string(t.rows[r].size()) + " cells, header has " + std::to_string(t.header.size())});
    return false;
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::error_code ec;
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw Error(Errc::IoFailure, "cannot write " + path.string());
    os << text;
    if (!os.flush())
        throw Error(Errc::IoFailure, "write failed for " + path.string());
}

inline bool looks_like_json(std::string_view text)
{
    const auto p = text.find_first_not_of(" \t\r\n");
    return p != std::string_view::npos && text[p] == '[';
}

inline nlohmann::json parse_json_array(const std::string& text, const std::filesystem::path& path)
{
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array())
        throw Error(Errc::CorruptFile, path.string() + ": expected a JSON array of objects");
    return j;
}

} // namespace detail

// ------------------------------------------------------------ annotations

enum class AnnotationSchema { Raw, Averaged };

struct AnnotationFile {
    AnnotationSchema schema = AnnotationSchema::Raw;
    std::vector<RatingRecord> ratings;   // Raw
    std::vector<MidLevelVector> averages; // Averaged, in file order
};

namespace detail {

inline std::string count_column(MidLevelName n) { return "n_" + std::string(to_string(n)); }

/// Averaged rows: song_id, the seven features, optional n_<feature> counts.
inline void parse_averaged(const CsvTable& t, const std::vector<std::string>& h, Loaded<AnnotationFile>& out)
{
    const std::size_t id_col = require_column(h, "song_id", "averaged annotations");
    std::array<std::size_t, kMidLevelCount> val_col{};
    std::array<std::optional<std::size_t>, kMidLevelCount> n_col{};
    for (MidLevelName n : kMidLevelNames) {
        val_col[index_of(n)] = *find(h, to_string(n));
        n_col[index_of(n)] = find(h, count_column(n));
    }
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!check_width(t, r, out.errors))
            continue;
        const auto& row = t.rows[r];
        MidLevelVector v;
        v.song_id = std::string(trim(row[id_col]));
        std::optional<RowError> err;
        if (v.song_id.empty())
            err = RowError{t.lines[r], Errc::InvalidArgument, "empty song_id"};
        for (MidLevelName n : kMidLevelNames) {
            if (err)
                break;
            const std::size_t f = index_of(n);
            const std::string_view cell = trim(row[val_col[f]]);
            if (cell.empty())
                continue;
            const auto x = parse_double(cell);
            if (!x)
                err = RowError{t.lines[r], Errc::CorruptFile, std::string(to_string(n)) + " '" + std::string(cell) + "' is not a number"};
            else if (*x < kMinRating || *x > kMaxRating)
                err = RowError{t.lines[r], Errc::OutOfRangeRating,
                               std::string(to_string(n)) + " " + std::string(cell) + " outside [1, 9]"};
            else
                v.values[f] = *x;
            if (!err && n_col[f] && !trim(row[*n_col[f]]).empty()) {
                const auto c = parse_integer(row[*n_col[f]]);
                if (!c || *c < 0)
                    err = RowError{t.lines[r], Errc::CorruptFile, count_column(n) + " is not a count"};
                else
                    v.n_ratings[f] = static_cast<std::size_t>(*c);
            }
        }
        if (!err && !seen.insert(v.song_id).second)
            err = RowError{t.lines[r], Errc::DuplicateSongId, "song " + v.song_id + " appears twice"};
        if (err)
            out.errors.push_back(*err);
        else
            out.data.averages.push_back(std::move(v));
    }
}

/// Raw rows: worker_id, song_id, feature, rating.
inline void parse_raw(const CsvTable& t, const std::vector<std::string>& h, Loaded<AnnotationFile>& out)
{
    const std::size_t w = *find(h, "worker_id"), s = require_column(h, "song_id", "raw annotations"),
                      f = *find(h, "feature"), q = *find(h, "rating");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!check_width(t, r, out.errors))
            continue;
        const auto& row = t.rows[r];
        RatingRecord rec;
        rec.worker_id = std::string(trim(row[w]));
        rec.song_id = std::string(trim(row[s]));
        const auto feature = parse_midlevel_name(trim(row[f]));
        const auto value = parse_double(row[q]);
        if (rec.worker_id.empty() || rec.song_id.empty()) {
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "empty worker_id or song_id"});
        } else if (!feature) {
            out.errors.push_back({t.lines[r], Errc::UnknownFeature, "unknown feature '" + std::string(trim(row[f])) + "'"});
        } else if (!value) {
            out.errors.push_back({t.lines[r], Errc::CorruptFile, "rating '" + std::string(trim(row[q])) + "' is not a number"});
        } else if (*value != std::floor(*value) || *value < kMinRating || *value > kMaxRating) {
            out.errors.push_back({t.lines[r], Errc::OutOfRangeRating, "rating " + std::string(trim(row[q])) + " not in 1..9"});
        } else {
            rec.feature = *feature;
            rec.rating = static_cast<int>(*value);
            out.data.ratings.push_back(std::move(rec));
        }
    }
}

} // namespace detail

/// Detects the schema from the header: raw files have worker_id, feature
/// and rating columns; averaged files have a column for each of the seven
/// features. A header matching both, or neither, is UnknownSchema.
inline Loaded<AnnotationFile> parse_annotations(const CsvTable& t)
{
    const auto h = detail::canonical_header(t);
    const bool raw = detail::find(h, "worker_id") && detail::find(h, "feature") && detail::find(h, "rating");
    const bool averaged = std::all_of(kMidLevelNames.begin(), kMidLevelNames.end(),
                                      [&](MidLevelName n) { return detail::find(h, to_string(n)).has_value(); });
    if (raw == averaged)
        throw Error(Errc::UnknownSchema, raw ? "header matches both the raw and the averaged annotation layouts"
                                             : "header matches neither the raw nor the averaged annotation layout");
    Loaded<AnnotationFile> out;
    if (raw) {
        out.data.schema = AnnotationSchema::Raw;
        detail::parse_raw(t, h, out);
    } else {
        out.data.schema = AnnotationSchema::Averaged;
        detail::parse_averaged(t, h, out);
    }
    return out;
}

inline Loaded<AnnotationFile> load_annotations(const std::filesystem::path& path)
{
    return parse_annotations(read_csv(path));
}

// ------------------------------------------------------------ comparisons

inline Loaded<std::vector<ComparisonRecord>> parse_comparisons(const CsvTable& t)
{
    const auto h = detail::canonical_header(t);
    const std::size_t w = detail::require_column(h, "worker_id", "comparisons"),
                      f = detail::require_column(h, "feature", "comparisons"),
                      a = detail::require_column(h, "song_a", "comparisons"),
                      b = detail::require_column(h, "song_b", "comparisons"),
                      win = detail::require_column(h, "winner", "comparisons");
    Loaded<std::vector<ComparisonRecord>> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!detail::check_width(t, r, out.errors))
            continue;
        const auto& row = t.rows[r];
        ComparisonRecord c;
        c.worker_id = std::string(trim(row[w]));
        c.song_a = std::string(trim(row[a]));
        c.song_b = std::string(trim(row[b]));
        const auto feature = parse_midlevel_name(trim(row[f]));
        const std::string wv(trim(row[win]));
        if (c.song_a.empty() || c.song_b.empty()) {
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "empty song id"});
            continue;
        }
        if (c.song_a == c.song_b) {
            out.errors.push_back({t.lines[r], Errc::SelfComparison, "song " + c.song_a + " compared with itself"});
            continue;
        }
        if (!feature) {
            out.errors.push_back({t.lines[r], Errc::UnknownFeature, "unknown feature '" + std::string(trim(row[f])) + "'"});
            continue;
        }
        c.feature = *feature;
        if (wv == "A" || wv == "a" || wv == c.song_a)
            c.winner = Winner::A;
        else if (wv == "B" || wv == "b" || wv == c.song_b)
            c.winner = Winner::B;
        else {
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "winner '" + wv + "' is neither A, B nor a compared song"});
            continue;
        }
        out.data.push_back(std::move(c));
    }
    return out;
}

inline Loaded<std::vector<ComparisonRecord>> load_comparisons(const std::filesystem::path& path)
{
    return parse_comparisons(read_csv(path));
}

// ------------------------------------------------------------ emotion targets

inline constexpr std::array<std::string_view, 8> kEmotionDimensions = {
    "valence", "energy", "tension", "anger", "fear", "happy", "sad", "tender",
};

inline bool is_emotion_dimension(std::string_view name)
{
    return std::find(kEmotionDimensions.begin(), kEmotionDimensions.end(), name) != kEmotionDimensions.end();
}

struct EmotionTargetTable {
    std::vector<std::string> columns;          // every value column, header order
    std::vector<std::string> unknown_columns;  // columns that are not emotion dimensions
    std::vector<std::string> song_ids;
    std::vector<std::vector<std::optional<double>>> values; // [row][column]

    std::optional<std::size_t> column(std::string_view name) const { return detail::find(columns, name); }

    /// Emotion dimensions present, in canonical order.
    std::vector<std::string> dimensions() const
    {
        std::vector<std::string> out;
        for (auto d : kEmotionDimensions)
            if (column(d))
                out.emplace_back(d);
        return out;
    }

    /// Rows with a value in every requested column.
    DesignMatrix design(const std::vector<std::string>& names) const
    {
        std::vector<std::size_t> cols;
        for (const auto& n : names) {
            auto c = column(n);
            if (!c)
                throw Error(Errc::InvalidArgument, "no target column '" + n + "'");
            cols.push_back(*c);
        }
        DesignMatrix m;
        m.column_names = names;
        std::vector<std::size_t> keep;
        for (std::size_t r = 0; r < song_ids.size(); ++r)
            if (std::all_of(cols.begin(), cols.end(), [&](std::size_t c) { return values[r][c].has_value(); }))
                keep.push_back(r);
        m.values.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < keep.size(); ++i) {
            m.row_ids.push_back(song_ids[keep[i]]);
            for (std::size_t j = 0; j < cols.size(); ++j)
                m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *values[keep[i]][cols[j]];
        }
        return m;
    }
};

inline Loaded<EmotionTargetTable> parse_emotion_targets(const CsvTable& t)
{
    const auto h = detail::canonical_header(t);
    const std::size_t id = detail::require_column(h, "song_id", "emotion targets");
    Loaded<EmotionTargetTable> out;
    std::vector<std::size_t> value_cols;
    for (std::size_t c = 0; c < h.size(); ++c) {
        if (c == id)
            continue;
        value_cols.push_back(c);
        out.data.columns.push_back(h[c]);
        if (!is_emotion_dimension(h[c])) {
            out.data.unknown_columns.push_back(h[c]);
            out.warnings.push_back("column '" + t.header[c] + "' is not an emotion dimension; kept as is");
        }
    }
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!detail::check_width(t, r, out.errors))
            continue;
        const auto& row = t.rows[r];
        const std::string sid(trim(row[id]));
        if (sid.empty()) {
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "empty song_id"});
            continue;
        }
        std::vector<std::optional<double>> vals;
        std::optional<RowError> err;
        for (std::size_t j = 0; j < value_cols.size() && !err; ++j) {
            const std::string_view cell = trim(row[value_cols[j]]);
            if (cell.empty()) {
                vals.emplace_back();
                continue;
            }
            const auto x = parse_double(cell);
            if (!x)
                err = RowError{t.lines[r], Errc::CorruptFile, out.data.columns[j] + " '" + std::string(cell) + "' is not a finite number"};
            vals.push_back(x);
        }
        if (!err && !seen.insert(sid).second)
            err = RowError{t.lines[r], Errc::DuplicateSongId, "song " + sid + " appears twice"};
        if (err) {
            out.errors.push_back(*err);
            continue;
        }
        out.data.song_ids.push_back(sid);
        out.data.values.push_back(std::move(vals));
    }
    return out;
}

inline Loaded<EmotionTargetTable> load_emotion_targets(const std::filesystem::path& path)
{
    return parse_emotion_targets(read_csv(path));
}

// ------------------------------------------------------------ cluster labels

struct ClusterLabel {
    std::string song_id;
    int cluster = 1; // 1..5

    bool operator==(const ClusterLabel&) const = default;
};

inline constexpr int kClusterCount = 5;

inline Loaded<std::vector<ClusterLabel>> parse_cluster_labels(const CsvTable& t)
{
    const auto h = detail::canonical_header(t);
    const std::size_t id = detail::require_column(h, "song_id", "cluster labels"),
                      c = detail::require_column(h, "cluster", "cluster labels");
    Loaded<std::vector<ClusterLabel>> out;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!detail::check_width(t, r, out.errors))
            continue;
        ClusterLabel l{std::string(trim(t.rows[r][id])), 0};
        std::string_view cell = trim(t.rows[r][c]);
        if (cell.size() > 7 && (cell.substr(0, 7) == "Cluster" || cell.substr(0, 7) == "cluster"))
            cell = trim(cell.substr(7));
        const auto v = parse_integer(cell);
        if (l.song_id.empty())
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "empty song_id"});
        else if (!v || *v < 1 || *v > kClusterCount)
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "cluster '" + std::string(cell) + "' not in 1..5"});
        else if (!seen.insert(l.song_id).second)
            out.errors.push_back({t.lines[r], Errc::DuplicateSongId, "song " + l.song_id + " appears twice"});
        else {
            l.cluster = static_cast<int>(*v);
            out.data.push_back(std::move(l));
        }
    }
    return out;
}

inline Loaded<std::vector<ClusterLabel>> load_cluster_labels(const std::filesystem::path& path)
{
    return parse_cluster_labels(read_csv(path));
}

// ------------------------------------------------------------ manifests

enum class SongSource { Jamendo, Magnatune, ReusedDataset };

inline std::string_view to_string(SongSource s)
{
    switch (s) {
    case SongSource::Jamendo: return "jamendo";
    case SongSource::Magnatune: return "magnatune";
    case SongSource::ReusedDataset: return "reused-dataset";
    }
    return "jamendo";
}

struct SongManifestEntry {
    std::string song_id;
    std::optional<std::filesystem::path> audio_path; // resolved against the manifest's directory
    std::string artist_id;
    SongSource source = SongSource::Jamendo;
    std::optional<std::string> url;
    std::vector<std::string> tags;
};

inline constexpr std::size_t kMaxSongsPerArtist = 5;

/// Columns: song_id, artist_id (required); audio_path, source, url, tags
/// (';'-separated) optional.
inline Loaded<std::vector<SongManifestEntry>> parse_song_manifest(const CsvTable& t,
                                                                 const std::filesystem::path& base = {})
{
    const auto h = detail::canonical_header(t);
    const std::size_t id = detail::require_column(h, "song_id", "song manifest"),
                      artist = detail::require_column(h, "artist_id", "song manifest");
    const auto audio = detail::find(h, "audio_path"), source = detail::find(h, "source"), url = detail::find(h, "url"),
               tags = detail::find(h, "tags");
    Loaded<std::vector<SongManifestEntry>> out;
    std::set<std::string> seen;
    std::map<std::string, std::size_t> per_artist;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!detail::check_width(t, r, out.errors))
            continue;
        const auto& row = t.rows[r];
        SongManifestEntry e;
        e.song_id = std::string(trim(row[id]));
        e.artist_id = std::string(trim(row[artist]));
        if (e.song_id.empty() || e.artist_id.empty()) {
            out.errors.push_back({t.lines[r], Errc::InvalidArgument, "empty song_id or artist_id"});
            continue;
        }
        if (audio && !trim(row[*audio]).empty()) {
            std::filesystem::path p(std::string(trim(row[*audio])));
            e.audio_path = p.is_relative() && !base.empty() ? base / p : p;
        }
        if (source && !trim(row[*source]).empty()) {
            const std::string s(trim(row[*source]));
            if (s == "jamendo")
                e.source = SongSource::Jamendo;
            else if (s == "magnatune")
                e.source = SongSource::Magnatune;
            else if (s == "reused-dataset" || s == "reused")
                e.source = SongSource::ReusedDataset;
            else {
                out.errors.push_back({t.lines[r], Errc::InvalidArgument, "unknown source '" + s + "'"});
                continue;
            }
        }
        if (url && !trim(row[*url]).empty())
            e.url = std::string(trim(row[*url]));
        if (tags) {
            std::string_view rest = row[*tags];
            while (!rest.empty()) {
                const auto cut = rest.find(';');
                const std::string_view tag = trim(rest.substr(0, cut));
                if (!tag.empty())
                    e.tags.emplace_back(tag);
                rest = cut == std::string_view::npos ? std::string_view() : rest.substr(cut + 1);
            }
        }
        if (!seen.insert(e.song_id).second) {
            out.errors.push_back({t.lines[r], Errc::DuplicateSongId, "song " + e.song_id + " appears twice"});
            continue;
        }
        ++per_artist[e.artist_id];
        out.data.push_back(std::move(e));
    }
    for (const auto& [a, n] : per_artist)
        if (n > kMaxSongsPerArtist)
            out.warnings.push_back("artist " + a + " has " + std::to_string(n) + " songs (more than " +
                                   std::to_string(kMaxSongsPerArtist) + ")");
    return out;
}

inline Loaded<std::vector<SongManifestEntry>> load_song_manifest(const std::filesystem::path& path)
{
    return parse_song_manifest(read_csv(path), path.parent_path());
}

struct TagManifest {
    std::vector<std::string> tags;                 // sorted
    std::vector<std::string> song_ids;             // manifest order
    std::vector<std::vector<std::uint8_t>> labels; // [song][tag] in {0, 1}
    std::vector<std::size_t> counts;               // songs per kept tag
};

/// Keeps the tags applied to at least `min_count` songs.
inline TagManifest build_tag_manifest(const std::vector<SongManifestEntry>& entries, std::size_t min_count)
{
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries) {
        std::set<std::string> uniq(e.tags.begin(), e.tags.end());
        for (const auto& t : uniq)
            ++counts[t];
    }
    TagManifest m;
    for (const auto& [t, n] : counts)
        if (n >= min_count) {
            m.tags.push_back(t);
            m.counts.push_back(n);
        }
    if (m.tags.empty())
        throw Error(Errc::EmptyInput, "no tag is applied to " + std::to_string(min_count) + " songs");
    for (const auto& e : entries) {
        m.song_ids.push_back(e.song_id);
        std::vector<std::uint8_t> row(m.tags.size(), 0);
        for (const auto& t : e.tags) {
            const auto it = std::lower_bound(m.tags.begin(), m.tags.end(), t);
            if (it != m.tags.end() && *it == t)
                row[static_cast<std::size_t>(it - m.tags.begin())] = 1;
        }
        m.labels.push_back(std::move(row));
    }
    return m;
}

// ------------------------------------------------------------ feature tables

/// Hand-crafted descriptors of one clip. `song_id` is the file stem.
struct FeatureRow {
    std::string song_id;
    std::string path;
    HandcraftedFeatures features;

    bool operator==(const FeatureRow&) const = default;
};

struct HandcraftedColumn {
    std::string_view name;
    double HandcraftedFeatures::*member;
    double lo, hi;
};

inline constexpr std::array<HandcraftedColumn, 6> kHandcraftedColumns = {{
    {"dissonance", &HandcraftedFeatures::dissonance, 0.0, HUGE_VAL},
    {"inharmonicity", &HandcraftedFeatures::inharmonicity, 0.0, 0.5},
    {"pulse_clarity", &HandcraftedFeatures::pulse_clarity, 0.0, 1.0},
    {"attack_leap", &HandcraftedFeatures::attack_leap, 0.0, HUGE_VAL},
    {"hcdf_mean", &HandcraftedFeatures::hcdf_mean, 0.0, HUGE_VAL},
    {"majorness", &HandcraftedFeatures::majorness, -1.0, 1.0},
}};

inline std::string to_csv(const std::vector<FeatureRow>& rows)
{
    std::ostringstream os;
    std::vector<std::string> head = {"song_id", "path"};
    for (const auto& c : kHandcraftedColumns)
        head.emplace_back(c.name);
    write_csv_row(os, head);
    for (const auto& r : rows) {
        std::vector<std::string> cells = {r.song_id, r.path};
        for (const auto& c : kHandcraftedColumns)
            cells.push_back(format_double(r.features.*c.member));
        write_csv_row(os, cells);
    }
    return os.str();
}

inline std::string to_json(const std::vector<FeatureRow>& rows)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        o["song_id"] = r.song_id;
        o["path"] = r.path;
        for (const auto& c : kHandcraftedColumns)
            o[std::string(c.name)] = r.features.*c.member;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

inline std::string to_csv(const std::vector<MidLevelVector>& rows)
{
    std::ostringstream os;
    std::vector<std::string> head = {"song_id"};
    for (MidLevelName n : kMidLevelNames)
        head.emplace_back(to_string(n));
    for (MidLevelName n : kMidLevelNames)
        head.push_back(detail::count_column(n));
    write_csv_row(os, head);
    for (const auto& v : rows) {
        std::vector<std::string> cells = {v.song_id};
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            cells.push_back(format_optional(v.values[f]));
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            cells.push_back(std::to_string(v.n_ratings[f]));
        write_csv_row(os, cells);
    }
    return os.str();
}

inline std::string to_json(const std::vector<MidLevelVector>& rows)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& v : rows) {
        nlohmann::ordered_json o;
        o["song_id"] = v.song_id;
        for (MidLevelName n : kMidLevelNames) {
            const auto& x = v.values[index_of(n)];
            o[std::string(to_string(n))] = x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
        }
        for (MidLevelName n : kMidLevelNames)
            o[detail::count_column(n)] = v.n_ratings[index_of(n)];
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

inline void write_features(const std::vector<FeatureRow>& rows, const std::filesystem::path& path, Format format)
{
    detail::write_file(path, format == Format::Csv ? to_csv(rows) : to_json(rows));
}

inline void write_features(const std::vector<MidLevelVector>& rows, const std::filesystem::path& path, Format format)
{
    detail::write_file(path, format == Format::Csv ? to_csv(rows) : to_json(rows));
}

namespace detail {

inline std::optional<RowError> check_features(const HandcraftedFeatures& f, std::size_t line)
{
    for (const auto& c : kHandcraftedColumns) {
        const double v = f.*c.member;
        if (!std::isfinite(v) || v < c.lo || v > c.hi)
            return RowError{line, Errc::InvalidArgument, std::string(c.name) + " " + format_double(v) + " out of range"};
    }
    return std::nullopt;
}

} // namespace detail

/// Reads either layout written by write_features (JSON when the content
/// starts with '['). JSON "lines" count array elements from 1.
inline Loaded<std::vector<FeatureRow>> load_feature_rows(const std::filesystem::path& path)
{
    const std::string text = read_text(path);
    Loaded<std::vector<FeatureRow>> out;
    if (detail::looks_like_json(text)) {
        const auto arr = detail::parse_json_array(text, path);
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto& o = arr[i];
            FeatureRow r;
            try {
                r.song_id = o.at("song_id").get<std::string>();
                r.path = o.value("path", std::string());
                for (const auto& c : kHandcraftedColumns)
                    r.features.*c.member = o.at(std::string(c.name)).get<double>();
            } catch (const nlohmann::json::exception& e) {
                out.errors.push_back({i + 1, Errc::CorruptFile, e.what()});
                continue;
            }
            if (auto err = detail::check_features(r.features, i + 1))
                out.errors.push_back(*err);
            else
                out.data.push_back(std::move(r));
        }
        return out;
    }
    const CsvTable t = parse_csv(text, path.string());
    const auto h = detail::canonical_header(t);
    const std::size_t id = detail::require_column(h, "song_id", "feature table");
    const auto p = detail::find(h, "audio_path");
    std::array<std::size_t, kHandcraftedColumns.size()> cols{};
    for (std::size_t c = 0; c < cols.size(); ++c)
        cols[c] = detail::require_column(h, kHandcraftedColumns[c].name, "feature table");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!detail::check_width(t, r, out.errors))
            continue;
        FeatureRow row;
        row.song_id = std::string(trim(t.rows[r][id]));
        if (p)
            row.path = t.rows[r][*p];
        std::optional<RowError> err;
        for (std::size_t c = 0; c < cols.size() && !err; ++c) {
            const auto v = parse_double(t.rows[r][cols[c]]);
            if (!v)
                err = RowError{t.lines[r], Errc::CorruptFile, std::string(kHandcraftedColumns[c].name) + " is not a finite number"};
            else
                row.features.*kHandcraftedColumns[c].member = *v;
        }
        if (!err)
            err = detail::check_features(row.features, t.lines[r]);
        if (err)
            out.errors.push_back(*err);
        else
            out.data.push_back(std::move(row));
    }
    return out;
}

/// Averaged mid-level vectors from either layout written by write_features.
inline Loaded<std::vector<MidLevelVector>> load_midlevel_vectors(const std::filesystem::path& path)
{
    const std::string text = read_text(path);
    Loaded<std::vector<MidLevelVector>> out;
    if (!detail::looks_like_json(text)) {
        auto a = parse_annotations(parse_csv(text, path.string()));
        if (a.data.schema != AnnotationSchema::Averaged)
            throw Error(Errc::UnknownSchema, path.string() + " holds raw ratings, not averaged vectors");
        out.data = std::move(a.data.averages);
        out.errors = std::move(a.errors);
        return out;
    }
    const auto arr = detail::parse_json_array(text, path);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& o = arr[i];
        MidLevelVector v;
        std::optional<RowError> err;
        try {
            v.song_id = o.at("song_id").get<std::string>();
            for (MidLevelName n : kMidLevelNames) {
                const auto& x = o.at(std::string(to_string(n)));
                if (!x.is_null())
                    v.values[index_of(n)] = x.get<double>();
                v.n_ratings[index_of(n)] = o.value(detail::count_column(n), std::size_t{0});
            }
        } catch (const nlohmann::json::exception& e) {
            err = RowError{i + 1, Errc::CorruptFile, e.what()};
        }
        for (std::size_t f = 0; f < kMidLevelCount && !err; ++f)
            if (v.values[f] && !(*v.values[f] >= kMinRating && *v.values[f] <= kMaxRating))
                err = RowError{i + 1, Errc::OutOfRangeRating, std::string(to_string(kMidLevelNames[f])) + " outside [1, 9]"};
        if (!err && !seen.insert(v.song_id).second)
            err = RowError{i + 1, Errc::DuplicateSongId, "song " + v.song_id + " appears twice"};
        if (err)
            out.errors.push_back(*err);
        else
            out.data.push_back(std::move(v));
    }
    return out;
}

/// Complete vectors as a song x feature matrix in canonical column order.
inline DesignMatrix midlevel_design(const std::vector<MidLevelVector>& vectors)
{
    DesignMatrix m;
    for (MidLevelName n : kMidLevelNames)
        m.column_names.emplace_back(to_string(n));
    std::vector<const MidLevelVector*> keep;
    for (const auto& v : vectors)
        if (v.complete())
            keep.push_back(&v);
    m.values.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(kMidLevelCount));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        m.row_ids.push_back(keep[i]->song_id);
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = *keep[i]->values[f];
    }
    return m;
}

} // namespace midlevel::io

#include "midlevel/io/datasets.hpp"
#include "midlevel/io/fetch.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

using namespace midlevel;
using namespace midlevel::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "midlevel_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

fs::path write_text(const std::string& name, const std::string& text)
{
    const fs::path p = scratch(name);
    std::ofstream(p, std::ios::binary) << text;
    return p;
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

// ------------------------------------------------------------------ csv

TEST(Csv, QuotingAndLineEnds)
{
    const auto t = parse_csv("\xEF\xBB\xBF" "a, b ,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\r\n\n2,\"multi\nline\",\r\n3,,last");
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0], (std::vector<std::string>{"1", "x,y", "say \"hi\""}));
    EXPECT_EQ(t.rows[1], (std::vector<std::string>{"2", "multi\nline", ""}));
    EXPECT_EQ(t.rows[2], (std::vector<std::string>{"3", "", "last"}));
    EXPECT_EQ(t.lines, (std::vector<std::size_t>{2, 4, 6}));
}

TEST(Csv, MalformedQuotes)
{
    EXPECT_EQ(code_of([] { parse_csv("a,b\n1,\"open\n"); }), Errc::CorruptFile);
    EXPECT_EQ(code_of([] { parse_csv("a,b\n1,\"x\"y\n"); }), Errc::CorruptFile);
    EXPECT_EQ(code_of([] { parse_csv("a,b\n1,x\"y\n"); }), Errc::CorruptFile);
    EXPECT_EQ(code_of([] { parse_csv(""); }), Errc::CorruptFile);
}

TEST(Csv, FieldEscapingRoundTrips)
{
    const std::vector<std::string> cells = {"plain", "com,ma", "quo\"te", "new\nline", " padded ", ""};
    std::ostringstream os;
    write_csv_row(os, {"h1", "h2", "h3", "h4", "h5", "h6"});
    write_csv_row(os, cells);
    const auto t = parse_csv(os.str());
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0], cells);
}

TEST(Csv, ShortestDoubleRoundTrip)
{
    midlevel::detail::Rng rng(7);
    std::vector<double> xs = {0.0, -0.0, 1.0 / 3.0, 0.1, 1e-300, 5e-324, std::numeric_limits<double>::max(), -2.5e17};
    for (int i = 0; i < 10000; ++i)
        xs.push_back(std::ldexp(midlevel::detail::uniform(rng, -1.0, 1.0), static_cast<int>(midlevel::detail::uniform_index(rng, 200)) - 100));
    for (double x : xs) {
        const auto back = parse_double(format_double(x));
        ASSERT_TRUE(back.has_value()) << format_double(x);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(*back), std::bit_cast<std::uint64_t>(x)) << format_double(x);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_FALSE(parse_double("1.5x"));
    EXPECT_FALSE(parse_double("nan"));
    EXPECT_FALSE(parse_double(""));
    EXPECT_EQ(parse_double(" 2.5 "), 2.5);
}

// ------------------------------------------------------------------ annotations

TEST(Annotations, AveragedRow)
{
    const auto t = parse_csv("song_id,melodiousness,articulation,rhythmic_stability,rhythmic_complexity,dissonance,"
                             "tonal_stability,modality\ns1,5.2,4.8,6.0,3.1,2.2,7.0,4.4\n");
    const auto a = parse_annotations(t);
    ASSERT_TRUE(a.clean());
    EXPECT_EQ(a.data.schema, AnnotationSchema::Averaged);
    ASSERT_EQ(a.data.averages.size(), 1u);
    const auto& v = a.data.averages[0];
    EXPECT_EQ(v.song_id, "s1");
    const double expect[7] = {5.2, 4.8, 6.0, 3.1, 2.2, 7.0, 4.4};
    for (std::size_t f = 0; f < 7; ++f)
        EXPECT_EQ(v.values[f], expect[f]);
    EXPECT_TRUE(v.complete());
}

TEST(Annotations, ArchiveSpellings)
{
    // column order and names as in the released archive
    const auto t = parse_csv("song id,melody,articulation,rhythm_complexity,rhythm_stability,dissonance,tonal_stability,"
                             "minorness\n7,6,5,4,3,2,1,9\n8,1,,3,4,5,6,7\n");
    const auto a = parse_annotations(t);
    ASSERT_TRUE(a.clean());
    ASSERT_EQ(a.data.averages.size(), 2u);
    const auto& v = a.data.averages[0];
    EXPECT_EQ(v[MidLevelName::Melodiousness], 6.0);
    EXPECT_EQ(v[MidLevelName::RhythmicComplexity], 4.0);
    EXPECT_EQ(v[MidLevelName::RhythmicStability], 3.0);
    EXPECT_EQ(v[MidLevelName::Modality], 9.0);
    EXPECT_FALSE(a.data.averages[1][MidLevelName::Articulation].has_value());
    EXPECT_FALSE(a.data.averages[1].complete());
}

TEST(Annotations, RawRowsAndRangeErrors)
{
    const auto t = parse_csv("worker_id,song_id,feature,rating\n"
                             "w1,s1,melodiousness,7\n"
                             "w1,s2,dissonance,10\n"
                             "w2,s1,mode,1\n"
                             "w2,s3,loudness,5\n"
                             "w3,s3,articulation,4.5\n"
                             "w3,s3,articulation,abc\n"
                             "w3,s4,articulation\n");
    const auto a = parse_annotations(t);
    EXPECT_EQ(a.data.schema, AnnotationSchema::Raw);
    ASSERT_EQ(a.data.ratings.size(), 2u);
    EXPECT_EQ(a.data.ratings[1], (RatingRecord{"w2", "s1", MidLevelName::Modality, 1}));
    ASSERT_EQ(a.errors.size(), 5u);
    EXPECT_EQ(a.errors[0].code, Errc::OutOfRangeRating);
    EXPECT_EQ(a.errors[0].line, 3u);
    EXPECT_EQ(a.errors[1].code, Errc::UnknownFeature);
    EXPECT_EQ(a.errors[2].code, Errc::OutOfRangeRating);
    EXPECT_EQ(a.errors[3].code, Errc::CorruptFile);
    EXPECT_EQ(a.errors[4].code, Errc::CorruptFile);
    EXPECT_EQ(code_of([&] { a.require_clean("ratings.csv"); }), Errc::OutOfRangeRating);
}

TEST(Annotations, AveragedOutOfRangeAndDuplicates)
{
    const auto a = parse_annotations(parse_csv("song_id,melodiousness,articulation,rhythmic_stability,rhythmic_complexity,"
                                               "dissonance,tonal_stability,modality\n"
                                               "a,1,1,1,1,1,1,1\n"
                                               "b,0.5,1,1,1,1,1,1\n"
                                               "a,2,2,2,2,2,2,2\n"));
    ASSERT_EQ(a.data.averages.size(), 1u);
    ASSERT_EQ(a.errors.size(), 2u);
    EXPECT_EQ(a.errors[0].code, Errc::OutOfRangeRating);
    EXPECT_EQ(a.errors[1].code, Errc::DuplicateSongId);
}

TEST(Annotations, SchemaDetection)
{
    EXPECT_EQ(code_of([] { parse_annotations(parse_csv("song_id,x,y\n1,2,3\n")); }), Errc::UnknownSchema);
    EXPECT_EQ(code_of([] {
                  parse_annotations(parse_csv("worker_id,song_id,feature,rating,melodiousness,articulation,"
                                              "rhythmic_stability,rhythmic_complexity,dissonance,tonal_stability,modality\n"));
              }),
              Errc::UnknownSchema);
    EXPECT_EQ(code_of([] { load_annotations(scratch("does_not_exist.csv")); }), Errc::IoFailure);
}

// ------------------------------------------------------------------ comparisons

TEST(Comparisons, Rows)
{
    const auto c = parse_comparisons(parse_csv("worker_id,feature,song_a,song_b,winner\n"
                                               "w,melodiousness,s1,s2,A\n"
                                               "w,articulation,s1,s2,s2\n"
                                               "w,dissonance,s3,s3,A\n"
                                               "w,brightness,s1,s2,B\n"
                                               "w,dissonance,s1,s2,s9\n"));
    ASSERT_EQ(c.data.size(), 2u);
    EXPECT_EQ(c.data[0], (ComparisonRecord{"w", MidLevelName::Melodiousness, "s1", "s2", Winner::A}));
    EXPECT_EQ(c.data[1].winner, Winner::B);
    ASSERT_EQ(c.errors.size(), 3u);
    EXPECT_EQ(c.errors[0].code, Errc::SelfComparison);
    EXPECT_EQ(c.errors[1].code, Errc::UnknownFeature);
    EXPECT_EQ(c.errors[2].code, Errc::InvalidArgument);
    EXPECT_EQ(code_of([] { parse_comparisons(parse_csv("worker_id,feature,song_a,winner\n")); }), Errc::UnknownSchema);
}

// ------------------------------------------------------------------ emotion targets

TEST(EmotionTargets, AllDimensionsAndMissingCells)
{
    const auto e = parse_emotion_targets(parse_csv("Song,Valence,Energy,Tension,Anger,Fear,Happy,Sad,Tender,Beauty\n"
                                                   "1,5,4,3,2,1,2,3,4,7\n"
                                                   "2,6,,3,2,1,2,3,4,7\n"));
    ASSERT_TRUE(e.clean());
    EXPECT_EQ(e.data.dimensions().size(), 8u);
    EXPECT_EQ(e.data.unknown_columns, (std::vector<std::string>{"beauty"}));
    EXPECT_EQ(e.warnings.size(), 1u);
    EXPECT_FALSE(e.data.values[1][*e.data.column("energy")].has_value());
    const DesignMatrix both = e.data.design({"valence", "energy"});
    EXPECT_EQ(both.row_ids, (std::vector<std::string>{"1"}));
    const DesignMatrix v = e.data.design({"valence"});
    EXPECT_EQ(v.values.rows(), 2);
    EXPECT_EQ(v.values(1, 0), 6.0);
}

TEST(EmotionTargets, DuplicateId)
{
    const auto e = parse_emotion_targets(parse_csv("song_id,valence\na,1\na,2\nb,x\n"));
    ASSERT_EQ(e.errors.size(), 2u);
    EXPECT_EQ(e.errors[0].code, Errc::DuplicateSongId);
    EXPECT_EQ(e.errors[1].code, Errc::CorruptFile);
    EXPECT_EQ(code_of([&] { e.require_clean(); }), Errc::DuplicateSongId);
}

// ------------------------------------------------------------------ manifests and labels

TEST(Manifest, ArtistWarningAndTags)
{
    std::string text = "song_id,artist_id,audio_path,source,tags\n";
    for (int i = 0; i < 7; ++i)
        text += "s" + std::to_string(i) + ",art," + "clips/s" + std::to_string(i) + ".wav,jamendo," +
                (i < 3 ? "rock;guitar" : "rock") + "\n";
    text += "x,other,,magnatune,\"jazz; rock\"\n";
    text += "x,other,,magnatune,jazz\n";
    text += "y,other,,vinyl,jazz\n";
    const auto m = parse_song_manifest(parse_csv(text), "/data");
    ASSERT_EQ(m.data.size(), 8u);
    ASSERT_EQ(m.errors.size(), 2u);
    EXPECT_EQ(m.errors[0].code, Errc::DuplicateSongId);
    EXPECT_EQ(m.errors[1].code, Errc::InvalidArgument);
    ASSERT_EQ(m.warnings.size(), 1u);
    EXPECT_NE(m.warnings[0].find("art"), std::string::npos);
    EXPECT_EQ(*m.data[0].audio_path, fs::path("/data/clips/s0.wav"));
    EXPECT_EQ(m.data[7].source, SongSource::Magnatune);
    EXPECT_EQ(m.data[7].tags, (std::vector<std::string>{"jazz", "rock"}));

    const TagManifest tm = build_tag_manifest(m.data, 3);
    EXPECT_EQ(tm.tags, (std::vector<std::string>{"guitar", "rock"}));
    EXPECT_EQ(tm.counts, (std::vector<std::size_t>{3, 8}));
    EXPECT_EQ(tm.labels[7], (std::vector<std::uint8_t>{0, 1}));
    for (std::size_t k = 0; k < tm.tags.size(); ++k) {
        std::size_t n = 0;
        for (const auto& row : tm.labels)
            n += row[k];
        EXPECT_GE(n, 3u);
    }
    EXPECT_EQ(code_of([&] { build_tag_manifest(m.data, 100); }), Errc::EmptyInput);
}

TEST(ClusterLabels, Rows)
{
    const auto c = parse_cluster_labels(parse_csv("song_id,cluster\na,1\nb,Cluster 5\nc,6\na,2\n"));
    EXPECT_EQ(c.data, (std::vector<ClusterLabel>{{"a", 1}, {"b", 5}}));
    ASSERT_EQ(c.errors.size(), 2u);
    EXPECT_EQ(c.errors[1].code, Errc::DuplicateSongId);
}

// ------------------------------------------------------------------ writers

namespace {

std::vector<FeatureRow> sample_rows()
{
    return {
        {"song, \"one\"", "dir/song one.wav", {0.1, 1.0 / 3.0, 0.999999, 12.5, 1e-300, -1.0}},
        {"2", "b.wav", {0.0, 0.5, 0.0, 0.0, 0.0, 1.0}},
    };
}

std::vector<MidLevelVector> sample_vectors()
{
    MidLevelVector a;
    a.song_id = "a";
    for (std::size_t f = 0; f < 7; ++f) {
        a.values[f] = 1.0 + f / 3.0;
        a.n_ratings[f] = f + 1;
    }
    MidLevelVector b = a;
    b.song_id = "b,c";
    b.values[3].reset();
    b.n_ratings[3] = 0;
    return {a, b};
}

} // namespace

TEST(Writers, FeatureRowsRoundTrip)
{
    for (Format fmt : {Format::Csv, Format::Json}) {
        const fs::path p = scratch(fmt == Format::Csv ? "features.csv" : "features.json");
        write_features(sample_rows(), p, fmt);
        const auto back = load_feature_rows(p);
        ASSERT_TRUE(back.clean());
        EXPECT_EQ(back.data, sample_rows());
    }
}

TEST(Writers, MidLevelVectorsRoundTrip)
{
    for (Format fmt : {Format::Csv, Format::Json}) {
        const fs::path p = scratch(fmt == Format::Csv ? "vectors.csv" : "vectors.json");
        write_features(sample_vectors(), p, fmt);
        const auto back = load_midlevel_vectors(p);
        ASSERT_TRUE(back.clean());
        EXPECT_EQ(back.data, sample_vectors());
    }
}

TEST(Writers, EmptyListAndJsonSchema)
{
    const fs::path p = scratch("empty.csv");
    write_features(std::vector<FeatureRow>{}, p, Format::Csv);
    EXPECT_EQ(read_text(p), "song_id,path,dissonance,inharmonicity,pulse_clarity,attack_leap,hcdf_mean,majorness\n");
    EXPECT_TRUE(load_feature_rows(p).data.empty());

    const auto j = nlohmann::json::parse(to_json(sample_rows()));
    ASSERT_TRUE(j.is_array());
    std::vector<std::string> keys;
    for (const auto& [k, v] : j[0].items())
        keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    EXPECT_EQ(keys, (std::vector<std::string>{"attack_leap", "dissonance", "hcdf_mean", "inharmonicity", "majorness",
                                              "path", "pulse_clarity", "song_id"}));
    const auto jv = nlohmann::json::parse(to_json(sample_vectors()));
    EXPECT_TRUE(jv[1]["rhythmic_complexity"].is_null());
    EXPECT_EQ(jv[0]["n_modality"], 7);
}

TEST(Writers, RejectsInvalidFeatureRows)
{
    const fs::path p = write_text("bad_features.csv", "song_id,path,dissonance,inharmonicity,pulse_clarity,attack_leap,"
                                                      "hcdf_mean,majorness\na,a.wav,0.1,0.7,0.5,1,1,0\n"
                                                      "b,b.wav,0.1,0.2,0.5,1,1,0\n");
    const auto r = load_feature_rows(p);
    EXPECT_EQ(r.data.size(), 1u);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].line, 2u);
}

TEST(Writers, UnwritablePath)
{
    const fs::path blocker = write_text("blocker", "x");
    EXPECT_EQ(code_of([&] { write_features(sample_rows(), blocker / "out.csv", Format::Csv); }), Errc::IoFailure);
}

TEST(Writers, DesignFromVectors)
{
    const DesignMatrix m = midlevel_design(sample_vectors());
    EXPECT_EQ(m.row_ids, (std::vector<std::string>{"a"}));
    EXPECT_EQ(m.values.cols(), 7);
    EXPECT_EQ(m.column_names[6], "modality");
}

// ------------------------------------------------------------------ fetch

TEST(Fetch, Sha256KnownVector)
{
    const fs::path p = write_text("abc.txt", "abc");
    EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fetch, LocalFileUrl)
{
    const fs::path src = write_text("archive_src.bin", "archive bytes");
    const fs::path dest = scratch("fetched/archive.bin");
    fs::remove(dest);
    const std::string sum = sha256_file(src);
    fetch_archive("file://" + src.string(), dest, sum);
    ASSERT_TRUE(fs::exists(dest));
    EXPECT_EQ(sha256_file(dest), sum);
}

TEST(Fetch, ChecksumMismatchRemovesFile)
{
    const fs::path src = write_text("archive_src2.bin", "archive bytes");
    const fs::path dest = scratch("fetched/bad.bin");
    EXPECT_EQ(code_of([&] { fetch_archive("file://" + src.string(), dest, std::string(64, '0')); }),
              Errc::ChecksumMismatch);
    EXPECT_FALSE(fs::exists(dest));
    EXPECT_EQ(code_of([&] { fetch_archive("file://" + scratch("nope.bin").string(), dest); }), Errc::NetworkFailure);
    EXPECT_EQ(code_of([&] { fetch_archive("ftp://host/x", dest); }), Errc::InvalidArgument);
}

TEST(Fetch, HttpFromLocalServer)
{
    httplib::Server srv;
    srv.Get("/data.bin", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(std::string(100000, 'z'), "application/octet-stream");
    });
    srv.Get("/moved", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/data.bin"); });
    const int port = srv.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    const fs::path dest = scratch("fetched/http.bin");
    fetch_archive(base + "/moved", dest);
    EXPECT_EQ(fs::file_size(dest), 100000u);
    EXPECT_EQ(code_of([&] { fetch_archive(base + "/missing", dest); }), Errc::NetworkFailure);
    EXPECT_FALSE(fs::exists(dest));
    srv.stop();
    th.join();
}

TEST(Fetch, DefaultLocation)
{
    EXPECT_EQ(kDefaultDatasetUrl, "https://osf.io/5aupt/");
}

// midlevel: batch front end for extraction, reliability, emotion and cluster
// reports, network training stages and archive download.
//
// Exit codes: 0 success, 1 some items failed (the rest were processed),
// 2 fatal configuration or input error.

#include "midlevel/annotation.hpp"
#include "midlevel/audio.hpp"
#include "midlevel/extractors.hpp"
#include "midlevel/io/datasets.hpp"
#include "midlevel/io/fetch.hpp"
#include "midlevel/nn.hpp"
#include "midlevel/statmodels.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace fs = std::filesystem;
using namespace midlevel;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kFatal = 2;

struct Common {
    std::vector<std::string> inputs;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::string format = "csv";
};

void add_common(CLI::App* sub, Common& c, bool takes_input = true)
{
    if (takes_input)
        sub->add_option("-i,--input", c.inputs, "input files or directories")->required();
    sub->add_option("-o,--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
    sub->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

void warn(const std::string& msg) { std::cerr << "midlevel: " << msg << "\n"; }

/// Relative paths missing from the working directory are looked up under
/// MIDLEVEL_DATA_DIR.
fs::path resolve(const std::string& p)
{
    fs::path path(p);
    if (path.is_relative() && !fs::exists(path))
        if (const char* root = std::getenv("MIDLEVEL_DATA_DIR"); root && *root && fs::exists(fs::path(root) / path))
            return fs::path(root) / path;
    return path;
}

fs::path single_input(const Common& c, const char* what)
{
    if (c.inputs.size() != 1)
        throw Error(Errc::InvalidArgument, std::string(what) + " takes exactly one --input");
    return resolve(c.inputs.front());
}

template <class T>
bool report_rows(const io::Loaded<T>& l, const fs::path& source)
{
    for (const auto& e : l.errors)
        warn(source.string() + ":" + std::to_string(e.line) + ": " + std::string(to_string(e.code)) + ": " + e.message);
    for (const auto& w : l.warnings)
        warn(source.string() + ": " + w);
    return !l.errors.empty();
}

std::string write_table(const fs::path& dir, const std::string& stem, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows, const std::string& format)
{
    std::ostringstream os;
    if (format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json o;
            for (std::size_t i = 0; i < header.size(); ++i) {
                const auto num = io::parse_double(r[i]);
                if (num && r[i].find_first_not_of("0123456789.eE+-") == std::string::npos)
                    o[header[i]] = *num;
                else if (r[i].empty())
                    o[header[i]] = nullptr;
                else
                    o[header[i]] = r[i];
            }
            arr.push_back(std::move(o));
        }
        os << arr.dump(2) << "\n";
    } else {
        io::write_csv_row(os, header);
        for (const auto& r : rows)
            io::write_csv_row(os, r);
    }
    const fs::path path = dir / (stem + (format == "json" ? ".json" : ".csv"));
    io::detail::write_file(path, os.str());
    return path.string();
}

std::string fixed(double v, int digits = 3)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ------------------------------------------------------------------ extract

struct ExtractOptions {
    Common c;
    unsigned threads = 0;
};

std::vector<fs::path> collect_audio(const std::vector<std::string>& inputs, bool& partial)
{
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p = resolve(in);
        if (!fs::exists(p)) {
            warn(in + ": no such file or directory");
            partial = true;
        } else if (fs::is_directory(p)) {
            for (const auto& e : fs::recursive_directory_iterator(p)) {
                if (!e.is_regular_file())
                    continue;
                std::string ext = e.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
                if (ext == ".wav")
                    files.push_back(e.path());
            }
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    if (files.empty())
        throw Error(Errc::NoInputs, "no WAV files found in the given inputs");
    return files;
}

int cmd_extract(const ExtractOptions& o)
{
    bool partial = false;
    const auto files = collect_audio(o.c.inputs, partial);
    std::vector<std::optional<io::FeatureRow>> rows(files.size());
    std::vector<std::string> errors(files.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            try {
                const AudioClip clip = load_wav(files[i]);
                rows[i] = io::FeatureRow{files[i].stem().string(), files[i].generic_string(), extract_all(clip)};
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const unsigned n_threads =
        std::max(1u, std::min<unsigned>(o.threads ? o.threads : std::thread::hardware_concurrency(),
                                        static_cast<unsigned>(files.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t)
        pool.emplace_back(work);
    work();
    for (auto& th : pool)
        th.join();

    std::vector<io::FeatureRow> ok;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (rows[i])
            ok.push_back(*rows[i]);
        else {
            ++failed;
            warn(files[i].string() + ": " + errors[i]);
        }
    }
    const fs::path out = fs::path(o.c.out) / (o.c.format == "json" ? "features.json" : "features.csv");
    io::write_features(ok, out, io::parse_format(o.c.format));
    std::cout << ok.size() << " of " << files.size() << " files extracted -> " << out.string() << "\n";
    return failed || partial ? kPartial : kOk;
}

// ------------------------------------------------------------------ reliability

struct ReliabilityOptions {
    Common c;
    std::string golden;
    std::size_t raters = 5;
    double max_mean_abs_dev = ScreeningThresholds{}.max_mean_abs_dev;
    double max_dev_std = ScreeningThresholds{}.max_dev_std;
};

int cmd_reliability(const ReliabilityOptions& o)
{
    const fs::path in = single_input(o.c, "reliability");
    const auto loaded = io::load_annotations(in);
    if (loaded.data.schema != io::AnnotationSchema::Raw)
        throw Error(Errc::UnknownSchema, in.string() + " holds averaged values; reliability needs raw ratings");
    bool partial = report_rows(loaded, in);
    const auto& ratings = loaded.data.ratings;
    if (ratings.empty())
        throw Error(Errc::EmptyInput, in.string() + " has no valid ratings");

    std::vector<MidLevelVector> golden;
    if (!o.golden.empty()) {
        const fs::path g = resolve(o.golden);
        const auto gl = io::load_midlevel_vectors(g);
        partial |= report_rows(gl, g);
        golden = gl.data;
    } else {
        golden = aggregate_ratings(ratings);
    }

    midlevel::detail::Rng rng(o.c.seed);
    std::vector<std::vector<std::string>> rows;
    std::cout << "feature               songs  alpha\n";
    for (MidLevelName f : kMidLevelNames) {
        const std::uint64_t s = rng();
        const Eigen::MatrixXd m = pseudo_rater_matrix(ratings, f, o.raters, s);
        std::string alpha, note;
        try {
            alpha = io::format_double(cronbach_alpha(m));
        } catch (const Error& e) {
            note = std::string(to_string(e.code()));
        }
        rows.push_back({std::string(to_string(f)), std::to_string(m.cols()), std::to_string(o.raters), alpha, note});
        char line[128];
        std::snprintf(line, sizeof line, "%-20s %6ld  %s\n", std::string(to_string(f)).c_str(), static_cast<long>(m.cols()),
                      alpha.empty() ? note.c_str() : fixed(*io::parse_double(alpha)).c_str());
        std::cout << line;
    }
    const fs::path dir(o.c.out);
    write_table(dir, "reliability", {"feature", "n_songs", "n_raters", "alpha", "note"}, rows, o.c.format);

    const auto workers = screen_workers(ratings, golden, {o.max_mean_abs_dev, o.max_dev_std});
    std::vector<std::vector<std::string>> wrows;
    std::set<std::string> banned;
    for (const auto& w : workers) {
        wrows.push_back({w.worker_id, std::to_string(w.n_ratings), std::to_string(w.n_evaluated),
                         io::format_double(w.mean_abs_dev_from_song_mean), io::format_double(w.dev_std),
                         w.evaluated ? "1" : "0", w.banned ? "1" : "0"});
        if (w.banned)
            banned.insert(w.worker_id);
    }
    write_table(dir, "workers",
                {"worker_id", "n_ratings", "n_evaluated", "mean_abs_dev", "dev_std", "evaluated", "banned"}, wrows,
                o.c.format);

    std::vector<RatingRecord> kept;
    for (const auto& r : ratings)
        if (!banned.count(r.worker_id))
            kept.push_back(r);
    io::write_features(aggregate_ratings(kept), dir / (o.c.format == "json" ? "averaged.json" : "averaged.csv"),
                       io::parse_format(o.c.format));
    std::cout << banned.size() << " of " << workers.size() << " workers banned\n";
    return partial ? kPartial : kOk;
}

// ------------------------------------------------------------------ emotion

struct EmotionOptions {
    Common c;
    std::string targets;
    std::size_t folds = 10;
    std::vector<std::string> dimensions;
};

std::string signed_name(const std::string& name, double w) { return name + (w >= 0 ? " (+)" : " (-)"); }

int cmd_emotion(const EmotionOptions& o)
{
    const fs::path in = single_input(o.c, "emotion"), tp = resolve(o.targets);
    const auto vectors = io::load_midlevel_vectors(in);
    bool partial = report_rows(vectors, in);
    const auto targets = io::load_emotion_targets(tp);
    partial |= report_rows(targets, tp);
    const DesignMatrix X = io::midlevel_design(vectors.data);
    const auto dims = o.dimensions.empty() ? targets.data.dimensions() : o.dimensions;
    if (dims.empty())
        throw Error(Errc::InvalidArgument, tp.string() + " has no emotion dimension columns");

    std::vector<std::string> header = {"dimension", "n_songs", "rho"};
    for (const auto& n : X.column_names)
        header.push_back("w_" + n);
    header.push_back("top_features");
    std::vector<std::vector<std::string>> rows;
    std::cout << "dimension   songs    rho  top features (seed " << o.c.seed << ", " << o.folds << "-fold)\n";
    for (const auto& d : dims) {
        try {
            const DesignMatrix T = targets.data.design({d});
            const auto res = emotion_report(X, T, o.folds, o.c.seed).front();
            const std::size_t n = midlevel::detail::join_rows(X.row_ids, T.row_ids).size();
            std::vector<std::string> row = {d, std::to_string(n), io::format_double(res.rho)};
            for (Eigen::Index j = 0; j < res.weights.size(); ++j)
                row.push_back(io::format_double(res.weights[j]));
            std::string top;
            for (std::size_t k = 0; k < std::min<std::size_t>(3, res.by_magnitude.size()); ++k) {
                const std::size_t j = res.by_magnitude[k];
                top += (k ? "; " : "") + signed_name(X.column_names[j], res.weights[static_cast<Eigen::Index>(j)]);
            }
            row.push_back(top);
            rows.push_back(row);
            char line[256];
            std::snprintf(line, sizeof line, "%-10s %6zu  %5.2f  %s\n", d.c_str(), n, res.rho, top.c_str());
            std::cout << line;
        } catch (const Error& e) {
            warn(d + ": " + e.what());
            partial = true;
        }
    }
    write_table(o.c.out, "emotion", header, rows, o.c.format);
    return partial ? kPartial : kOk;
}

// ------------------------------------------------------------------ clusters

struct ClusterOptions {
    Common c;
    std::string labels;
    std::size_t folds = 10;
};

int cmd_clusters(const ClusterOptions& o)
{
    const fs::path in = single_input(o.c, "clusters"), lp = resolve(o.labels);
    const auto vectors = io::load_midlevel_vectors(in);
    bool partial = report_rows(vectors, in);
    const auto labels = io::load_cluster_labels(lp);
    partial |= report_rows(labels, lp);
    std::vector<std::string> ids;
    std::vector<int> y;
    for (const auto& l : labels.data) {
        ids.push_back(l.song_id);
        y.push_back(l.cluster);
    }
    const ClusterReport rep = cluster_report(io::midlevel_design(vectors.data), ids, y, o.folds, o.c.seed);
    std::vector<std::vector<std::string>> rows;
    std::cout << "cluster  support    AUC     F1\n";
    for (const auto& c : rep.clusters) {
        rows.push_back({std::to_string(c.label), std::to_string(c.support), io::format_double(c.auc), io::format_double(c.f1)});
        char line[128];
        std::snprintf(line, sizeof line, "%7d  %7zu  %5.2f  %5.2f\n", c.label, c.support, c.auc, c.f1);
        std::cout << line;
    }
    rows.push_back({"weighted", "", "", io::format_double(rep.weighted_f1)});
    std::cout << "weighted F1 " << fixed(rep.weighted_f1, 2) << " (seed " << o.c.seed << ")\n";
    write_table(o.c.out, "clusters", {"cluster", "support", "auc", "f1"}, rows, o.c.format);
    return partial ? kPartial : kOk;
}

// ------------------------------------------------------------------ train

struct TrainOptions {
    Common c;
    std::string stage;
    std::string manifest;
    std::string annotations;
    std::string checkpoint;
    std::size_t height = 64, width = 64;
    std::vector<std::size_t> conv{8, 8, 16, 16, 16};
    std::vector<std::size_t> inception{8, 8, 8, 8, 8, 8, 8, 8};
    std::size_t embedding = 128;
    std::size_t samples = 64;
    std::size_t tags = 4;
    std::size_t min_tag_count = 1;
    std::size_t epochs = 29;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double validation = -1.0; // negative: stage default
    double test_fraction = 0.08;
    std::size_t components = 30;
};

nn::NetworkConfig network_config(const TrainOptions& o, std::size_t n_tags, bool midlevel_head)
{
    nn::NetworkConfig c;
    c.height = o.height;
    c.width = o.width;
    if (o.conv.size() != 5)
        throw Error(Errc::InvalidArgument, "--conv-channels needs 5 values");
    if (o.inception.size() != 8)
        throw Error(Errc::InvalidArgument, "--inception needs 8 values (two blocks of 1x1, 3x3, 5x5, pool)");
    std::copy(o.conv.begin(), o.conv.end(), c.conv_channels.begin());
    for (std::size_t b = 0; b < 2; ++b)
        c.inception[b] = {o.inception[4 * b], o.inception[4 * b + 1], o.inception[4 * b + 2], o.inception[4 * b + 3]};
    c.embedding = o.embedding;
    c.n_tags = n_tags;
    c.midlevel_head = midlevel_head;
    c.seed = o.c.seed;
    return c;
}

/// Patches of the songs in a manifest that have audio. Songs that fail to
/// load are reported and skipped.
struct AudioSet {
    std::vector<io::SongManifestEntry> entries;
    std::vector<MelPatch> patches;
    bool partial = false;
};

AudioSet load_audio_set(const TrainOptions& o, const std::vector<io::SongManifestEntry>& manifest)
{
    AudioSet s;
    midlevel::detail::Rng rng(o.c.seed);
    for (const auto& e : manifest) {
        const std::uint64_t crop_seed = rng();
        if (!e.audio_path) {
            warn(e.song_id + ": no audio_path in manifest");
            s.partial = true;
            continue;
        }
        try {
            const AudioClip clip = load_wav(*e.audio_path);
            const MelSpectrogram mel = mel_spectrogram(stft_magnitude(clip), o.height);
            s.patches.push_back(crop_patch_random(mel, crop_seed, o.width));
            s.entries.push_back(e);
        } catch (const std::exception& ex) {
            warn(e.audio_path->string() + ": " + ex.what());
            s.partial = true;
        }
    }
    if (s.patches.empty())
        throw Error(Errc::NoInputs, "no usable audio in the manifest");
    return s;
}

std::vector<io::SongManifestEntry> load_manifest(const TrainOptions& o, bool& partial)
{
    const fs::path p = resolve(o.manifest);
    const auto m = io::load_song_manifest(p);
    partial |= report_rows(m, p);
    return m.data;
}

/// Inputs with mid-level targets: manifest audio joined with averaged
/// annotations, or the synthetic set. Groups are artists (songs when
/// synthetic).
struct MidLevelData {
    nn::Dataset data;
    std::vector<std::string> ids, groups;
};

MidLevelData midlevel_data(const TrainOptions& o, bool& partial)
{
    MidLevelData d;
    if (o.manifest.empty()) {
        d.data = nn::synthetic_midlevel_dataset(o.samples, o.height, o.width, o.c.seed);
        for (std::size_t i = 0; i < o.samples; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "synthetic_%04zu", i);
            d.ids.emplace_back(id);
        }
        d.groups = d.ids;
        return d;
    }
    if (o.annotations.empty())
        throw Error(Errc::InvalidArgument, "--annotations is required with --manifest for this stage");
    const fs::path ap = resolve(o.annotations);
    const auto ann = io::load_midlevel_vectors(ap);
    partial |= report_rows(ann, ap);
    std::map<std::string, const MidLevelVector*> by_id;
    for (const auto& v : ann.data)
        if (v.complete())
            by_id[v.song_id] = &v;
    std::vector<io::SongManifestEntry> keep;
    for (const auto& e : load_manifest(o, partial))
        if (by_id.count(e.song_id))
            keep.push_back(e);
    AudioSet a = load_audio_set(o, keep);
    partial |= a.partial;
    d.data.inputs = nn::patches_to_tensor(a.patches);
    d.data.targets = nn::Tensor({a.entries.size(), kMidLevelCount, 1, 1});
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        d.ids.push_back(a.entries[i].song_id);
        d.groups.push_back(a.entries[i].artist_id);
        const MidLevelVector& v = *by_id.at(a.entries[i].song_id);
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            d.data.targets[i * kMidLevelCount + f] = *v.values[f];
    }
    return d;
}

nn::LoadedCheckpoint require_checkpoint(const TrainOptions& o)
{
    if (o.checkpoint.empty())
        throw Error(Errc::MissingCheckpoint, "stage '" + o.stage + "' needs --checkpoint");
    return nn::load_checkpoint(resolve(o.checkpoint));
}

void write_history(const fs::path& dir, const std::string& stem, const std::vector<nn::EpochMetrics>& h,
                   const std::string& format)
{
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : h)
        rows.push_back({std::to_string(m.stage), std::to_string(m.epoch), io::format_double(m.train_loss),
                        std::isnan(m.validation) ? "" : io::format_double(m.validation)});
    write_table(dir, stem, {"stage", "epoch", "train_loss", "validation"}, rows, format);
}

int train_pretrain(const TrainOptions& o)
{
    bool partial = false;
    nn::Dataset data;
    std::vector<std::string> tag_names;
    if (o.manifest.empty()) {
        data = nn::synthetic_tag_dataset(o.samples, o.tags, o.height, o.width, o.c.seed);
        for (std::size_t k = 0; k < o.tags; ++k)
            tag_names.push_back("tag" + std::to_string(k));
    } else {
        const auto manifest = load_manifest(o, partial);
        AudioSet a = load_audio_set(o, manifest);
        partial |= a.partial;
        const io::TagManifest tm = io::build_tag_manifest(a.entries, o.min_tag_count);
        tag_names = tm.tags;
        data.inputs = nn::patches_to_tensor(a.patches);
        data.targets = nn::Tensor({a.entries.size(), tm.tags.size(), 1, 1});
        for (std::size_t i = 0; i < a.entries.size(); ++i)
            for (std::size_t k = 0; k < tm.tags.size(); ++k)
                data.targets[i * tm.tags.size() + k] = tm.labels[i][k];
    }
    nn::Network net(network_config(o, tag_names.size(), false));
    nn::TrainConfig cfg;
    cfg.batch_size = o.batch_size;
    cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.validation_fraction = o.validation >= 0 ? o.validation : o.manifest.empty() ? 0.25 : 0.05;
    cfg.seed = o.c.seed;
    const auto res = nn::train_tags(net, data, cfg);
    const double auc = res.history.back().validation;
    const fs::path dir(o.c.out);
    nn::save_checkpoint(net, dir / "pretrain.ckpt",
                        {{"stage", "pretrain"}, {"seed", o.c.seed}, {"tags", tag_names}, {"epochs", o.epochs}});
    write_history(dir, "pretrain_metrics", res.history, o.c.format);
    std::cout << "pretrain: " << data.size() << " samples, " << tag_names.size() << " tags, validation mean AUC "
              << fixed(auc) << "\n";
    return partial ? kPartial : kOk;
}

int train_embed(const TrainOptions& o)
{
    bool partial = false;
    auto ck = require_checkpoint(o);
    std::vector<std::string> ids;
    nn::Tensor inputs;
    if (o.manifest.empty()) {
        TrainOptions so = o;
        so.height = ck.network.config().height;
        so.width = ck.network.config().width;
        MidLevelData d = midlevel_data(so, partial);
        inputs = d.data.inputs;
        ids = d.ids;
    } else {
        TrainOptions so = o;
        so.height = ck.network.config().height;
        so.width = ck.network.config().width;
        AudioSet a = load_audio_set(so, load_manifest(o, partial));
        partial |= a.partial;
        inputs = nn::patches_to_tensor(a.patches);
        for (const auto& e : a.entries)
            ids.push_back(e.song_id);
    }
    const Eigen::MatrixXd e = nn::embed(ck.network, inputs);
    std::vector<std::string> header = {"song_id"};
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
        char name[24];
        std::snprintf(name, sizeof name, "e%03ld", static_cast<long>(j));
        header.emplace_back(name);
    }
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        std::vector<std::string> r = {ids[static_cast<std::size_t>(i)]};
        for (Eigen::Index j = 0; j < e.cols(); ++j)
            r.push_back(io::format_double(e(i, j)));
        rows.push_back(std::move(r));
    }
    const std::string path = write_table(o.c.out, "embeddings", header, rows, o.c.format);
    std::cout << "embed: " << e.rows() << " x " << e.cols() << " -> " << path << "\n";
    return partial ? kPartial : kOk;
}

/// Grouped train/test split of the mid-level data.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(const MidLevelData& d, const TrainOptions& o)
{
    const GroupedSplit s = grouped_split(d.groups, o.test_fraction, o.c.seed);
    if (s.unreachable)
        warn("test fraction " + fixed(s.test_fraction) + " is off target " + fixed(o.test_fraction));
    return {s.train, s.test};
}

std::vector<std::vector<std::string>> score_rows(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth)
{
    std::vector<std::vector<std::string>> rows;
    for (std::size_t f = 0; f < kMidLevelCount; ++f) {
        const Eigen::VectorXd p = pred.col(static_cast<Eigen::Index>(f)), t = truth.col(static_cast<Eigen::Index>(f));
        std::string rho;
        try {
            rho = io::format_double(pearson(p, t));
        } catch (const Error&) {
        }
        rows.push_back({std::string(to_string(kMidLevelNames[f])), std::to_string(t.size()), rho, io::format_double(rmse(p, t))});
    }
    return rows;
}

Eigen::MatrixXd target_matrix(const nn::Dataset& d)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(kMidLevelCount));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = d.targets[i * kMidLevelCount + f];
    return m;
}

int train_transfer(const TrainOptions& o)
{
    bool partial = false;
    auto ck = require_checkpoint(o);
    TrainOptions so = o;
    so.height = ck.network.config().height;
    so.width = ck.network.config().width;
    const MidLevelData d = midlevel_data(so, partial);
    const auto [tr, te] = split_rows(d, o);
    const Eigen::MatrixXd e = nn::embed(ck.network, d.data.inputs);
    const Eigen::MatrixXd y = target_matrix(d.data);
    const Eigen::MatrixXd etr = midlevel::detail::take_rows(e, tr), ete = midlevel::detail::take_rows(e, te);
    const PcaTransform pca = pca_fit(etr, o.components);
    const Eigen::MatrixXd ztr = pca_apply(pca, etr), zte = pca_apply(pca, ete);
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(te.size()), static_cast<Eigen::Index>(kMidLevelCount)),
        base = pred;
    const Eigen::MatrixXd ytr = midlevel::detail::take_rows(y, tr), yte = midlevel::detail::take_rows(y, te);
    std::vector<std::vector<std::string>> params;
    for (std::size_t f = 0; f < kMidLevelCount; ++f) {
        const Eigen::Index c = static_cast<Eigen::Index>(f);
        const TunedKernel k = tune_kernel_rbf(ztr, ytr.col(c), KernelGrid{}, o.c.seed + f);
        pred.col(c) = predict_kernel(k.model, zte);
        base.col(c).setConstant(ytr.col(c).mean());
        params.push_back({std::string(to_string(kMidLevelNames[f])), io::format_double(k.model.lambda),
                          io::format_double(k.model.gamma)});
    }
    auto rows = score_rows(pred, yte);
    for (std::size_t f = 0; f < kMidLevelCount; ++f) {
        const Eigen::Index c = static_cast<Eigen::Index>(f);
        rows[f].push_back(io::format_double(rmse(base.col(c), yte.col(c))));
        rows[f].push_back(params[f][1]);
        rows[f].push_back(params[f][2]);
    }
    write_table(o.c.out, "transfer", {"feature", "n_test", "pearson", "rmse", "baseline_rmse", "lambda", "gamma"}, rows,
                o.c.format);
    std::cout << "transfer: " << tr.size() << " train / " << te.size() << " test songs, PCA " << pca.n_components()
              << " components (" << fixed(100.0 * pca.explained_ratio()) << "% variance)\n";
    for (const auto& r : rows)
        std::cout << "  " << r[0] << " rmse " << fixed(*io::parse_double(r[3])) << " vs mean " << fixed(*io::parse_double(r[4]))
                  << "\n";
    return partial ? kPartial : kOk;
}

int train_finetune(const TrainOptions& o)
{
    bool partial = false;
    auto ck = require_checkpoint(o);
    nn::Network& net = ck.network;
    TrainOptions so = o;
    so.height = net.config().height;
    so.width = net.config().width;
    const MidLevelData d = midlevel_data(so, partial);
    const auto [tr, te] = split_rows(d, o);
    if (!net.has_head(nn::Head::MidLevel))
        net.attach_midlevel_head(o.c.seed + 2);
    nn::FinetuneConfig cfg;
    cfg.batch_size = o.batch_size;
    cfg.learning_rate = o.lr;
    cfg.patience = o.patience;
    cfg.max_epochs_stage1 = o.max_epochs;
    cfg.max_epochs_stage2 = o.max_epochs;
    cfg.validation_fraction = o.validation >= 0 ? o.validation : 0.1;
    cfg.seed = o.c.seed;
    const auto res = nn::finetune(net, nn::subset(d.data, tr), cfg);
    const fs::path dir(o.c.out);
    nn::save_checkpoint(net, dir / "finetune.ckpt", {{"stage", "finetune"}, {"seed", o.c.seed}});
    write_history(dir, "finetune_metrics", res.history, o.c.format);
    const nn::Dataset test = nn::subset(d.data, te);
    const nn::Tensor p = nn::predict(net, test.inputs, nn::Head::MidLevel);
    Eigen::MatrixXd pm(static_cast<Eigen::Index>(te.size()), static_cast<Eigen::Index>(kMidLevelCount));
    for (std::size_t i = 0; i < te.size(); ++i)
        for (std::size_t f = 0; f < kMidLevelCount; ++f)
            pm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = p[i * kMidLevelCount + f];
    write_table(dir, "finetune_test", {"feature", "n_test", "pearson", "rmse"}, score_rows(pm, target_matrix(test)),
                o.c.format);
    std::cout << "finetune: " << res.history.size() << " epochs logged, test MSE "
              << fixed(nn::evaluate_loss(net, test, nn::Head::MidLevel), 4) << "\n";
    return partial ? kPartial : kOk;
}

int train_gradcheck(const TrainOptions& o)
{
    std::optional<nn::Network> loaded;
    if (!o.checkpoint.empty())
        loaded = nn::load_checkpoint(resolve(o.checkpoint)).network;
    nn::Network net = loaded ? *loaded : nn::Network(network_config(o, o.tags, true));
    if (!net.has_head(nn::Head::Tags))
        net.attach_tag_head(o.tags, o.c.seed + 1);
    if (!net.has_head(nn::Head::MidLevel))
        net.attach_midlevel_head(o.c.seed + 2);
    midlevel::detail::Rng rng(o.c.seed);
    nn::Tensor x(net.input_shape(2));
    for (double& v : x.values())
        v = midlevel::detail::normal(rng);
    nn::Tensor tags({2, net.output_width(nn::Head::Tags), 1, 1}), mid({2, kMidLevelCount, 1, 1});
    for (double& v : tags.values())
        v = midlevel::detail::uniform01(rng) < 0.5 ? 1.0 : 0.0;
    for (double& v : mid.values())
        v = midlevel::detail::uniform01(rng);
    double worst = 0.0;
    for (auto [head, t, name] : {std::tuple{nn::Head::Tags, &tags, "tags"}, std::tuple{nn::Head::MidLevel, &mid, "midlevel"}}) {
        nn::GradCheckConfig cfg;
        cfg.seed = o.c.seed;
        const auto r = nn::gradient_check(net, x, *t, head, cfg);
        std::cout << name << " head: max relative error " << r.max_relative_error << " over " << r.checked
                  << " parameters (" << r.skipped_at_kinks << " skipped at kinks), worst " << r.worst_parameter << "\n";
        worst = std::max(worst, r.max_relative_error);
    }
    std::cout << "max relative error " << worst << (worst < 1e-4 ? " < 1e-4 ok" : " >= 1e-4 FAILED") << "\n";
    return worst < 1e-4 ? kOk : kPartial;
}

int cmd_train(const TrainOptions& o)
{
    if (o.stage == "pretrain")
        return train_pretrain(o);
    if (o.stage == "embed")
        return train_embed(o);
    if (o.stage == "transfer")
        return train_transfer(o);
    if (o.stage == "finetune")
        return train_finetune(o);
    return train_gradcheck(o);
}

// ------------------------------------------------------------------ fetch

struct FetchOptions {
    Common c;
    std::string url = std::string(io::kDefaultDatasetUrl);
    std::string name = "midlevel_archive.zip";
    std::string sha256;
};

int cmd_fetch(const FetchOptions& o)
{
    fs::path dir(o.c.out);
    if (o.c.out == ".")
        if (const char* root = std::getenv("MIDLEVEL_DATA_DIR"); root && *root)
            dir = root;
    const fs::path dest = dir / o.name;
    io::fetch_archive(o.url, dest, o.sha256.empty() ? std::nullopt : std::optional<std::string>(o.sha256));
    std::cout << "fetched " << o.url << " -> " << dest.string() << " (sha256 " << io::sha256_file(dest) << ")\n";
    return kOk;
}

void write_config_echo(const CLI::App* sub, const std::string& out)
{
    std::ostringstream os;
    os << "# effective configuration; usable as --config\n";
    os << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    io::detail::write_file(fs::path(out) / (sub->get_name() + ".config.ini"), os.str());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mid-level perceptual feature toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value file; command-line flags override it");

    ExtractOptions ex;
    auto* s_ex = app.add_subcommand("extract", "hand-crafted descriptors for WAV files");
    add_common(s_ex, ex.c);
    s_ex->add_option("--threads", ex.threads, "worker threads (0: all cores)")->capture_default_str();

    ReliabilityOptions rel;
    auto* s_rel = app.add_subcommand("reliability", "Cronbach's alpha per feature and worker screening");
    add_common(s_rel, rel.c);
    s_rel->add_option("--golden", rel.golden, "trusted per-song means (default: means of the input)");
    s_rel->add_option("--raters", rel.raters, "pseudo-rater slots per song")->capture_default_str();
    s_rel->add_option("--max-mean-abs-dev", rel.max_mean_abs_dev, "ban threshold")->capture_default_str();
    s_rel->add_option("--max-dev-std", rel.max_dev_std, "ban threshold")->capture_default_str();

    EmotionOptions emo;
    auto* s_emo = app.add_subcommand("emotion", "emotion ratings regressed on mid-level features");
    add_common(s_emo, emo.c);
    s_emo->add_option("--targets", emo.targets, "emotion target table")->required();
    s_emo->add_option("--folds", emo.folds, "cross-validation folds")->capture_default_str();
    s_emo->add_option("--dimensions", emo.dimensions, "dimensions to report (default: all present)");

    ClusterOptions cl;
    auto* s_cl = app.add_subcommand("clusters", "mood clusters classified from mid-level features");
    add_common(s_cl, cl.c);
    s_cl->add_option("--labels", cl.labels, "song_id,cluster table")->required();
    s_cl->add_option("--folds", cl.folds, "cross-validation folds")->capture_default_str();

    TrainOptions tr;
    auto* s_tr = app.add_subcommand("train", "network stages: pretrain, embed, transfer, finetune, gradcheck");
    add_common(s_tr, tr.c, false);
    s_tr->add_option("--stage", tr.stage, "stage")
        ->required()
        ->check(CLI::IsMember({"pretrain", "embed", "transfer", "finetune", "gradcheck"}));
    s_tr->add_option("--manifest", tr.manifest, "song manifest (default: synthetic data)");
    s_tr->add_option("--annotations", tr.annotations, "averaged mid-level annotations (transfer, finetune)");
    s_tr->add_option("--checkpoint", tr.checkpoint, "input checkpoint (embed, transfer, finetune)");
    s_tr->add_option("--height", tr.height, "mel bands per patch")->capture_default_str();
    s_tr->add_option("--width", tr.width, "frames per patch")->capture_default_str();
    s_tr->add_option("--conv-channels", tr.conv, "five conv widths")->expected(5)->capture_default_str();
    s_tr->add_option("--inception", tr.inception, "two blocks of 1x1,3x3,5x5,pool widths")->expected(8)->capture_default_str();
    s_tr->add_option("--embedding", tr.embedding, "embedding width")->capture_default_str();
    s_tr->add_option("--samples", tr.samples, "synthetic set size")->capture_default_str();
    s_tr->add_option("--tags", tr.tags, "synthetic tag count")->capture_default_str();
    s_tr->add_option("--min-tag-count", tr.min_tag_count, "keep tags on at least this many songs")->capture_default_str();
    s_tr->add_option("--epochs", tr.epochs, "pretrain epochs")->capture_default_str();
    s_tr->add_option("--max-epochs", tr.max_epochs, "finetune epochs per stage")->capture_default_str();
    s_tr->add_option("--patience", tr.patience, "early stopping patience")->capture_default_str();
    s_tr->add_option("--batch-size", tr.batch_size, "batch size")->capture_default_str();
    s_tr->add_option("--lr", tr.lr, "learning rate")->capture_default_str();
    s_tr->add_option("--validation", tr.validation,
                     "held-out fraction; negative picks the stage default (pretrain 0.05, 0.25 on synthetic data; finetune 0.1)")
        ->capture_default_str();
    s_tr->add_option("--test-fraction", tr.test_fraction, "grouped test split")->capture_default_str();
    s_tr->add_option("--components", tr.components, "PCA components (transfer)")->capture_default_str();

    FetchOptions fe;
    auto* s_fe = app.add_subcommand("fetch", "download the annotation archive");
    add_common(s_fe, fe.c, false);
    s_fe->add_option("--url", fe.url, "archive URL")->capture_default_str();
    s_fe->add_option("--name", fe.name, "file name under --out (default dir: $MIDLEVEL_DATA_DIR)")->capture_default_str();
    s_fe->add_option("--sha256", fe.sha256, "expected checksum");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kFatal;
    }

    const std::vector<std::pair<CLI::App*, std::function<int()>>> commands = {
        {s_ex, [&] { return cmd_extract(ex); }},      {s_rel, [&] { return cmd_reliability(rel); }},
        {s_emo, [&] { return cmd_emotion(emo); }},    {s_cl, [&] { return cmd_clusters(cl); }},
        {s_tr, [&] { return cmd_train(tr); }},        {s_fe, [&] { return cmd_fetch(fe); }},
    };
    const std::map<CLI::App*, std::string> outs = {{s_ex, ex.c.out}, {s_rel, rel.c.out}, {s_emo, emo.c.out},
                                                   {s_cl, cl.c.out}, {s_tr, tr.c.out},   {s_fe, fe.c.out}};
    for (const auto& [sub, run] : commands) {
        if (!sub->parsed())
            continue;
        try {
            write_config_echo(sub, outs.at(sub));
            return run();
        } catch (const Error& e) {
            warn(e.what());
            return kFatal;
        } catch (const std::exception& e) {
            warn(e.what());
            return kFatal;
        }
    }
    return kFatal;
}

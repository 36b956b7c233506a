#pragma once

// Hand-crafted clip-level descriptors: sensory dissonance, inharmonicity,
// pulse clarity, attack leap, harmonic change (HCDF) and majorness.

#include "midlevel/audio.hpp"
#include "midlevel/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace midlevel {

struct HandcraftedFeatures {
    double dissonance = 0.0;    // >= 0
    double inharmonicity = 0.0; // [0, 0.5]
    double pulse_clarity = 0.0; // [0, 1]
    double attack_leap = 0.0;   // >= 0
    double hcdf_mean = 0.0;     // >= 0
    double majorness = 0.0;     // [-1, 1]

    bool operator==(const HandcraftedFeatures&) const = default;
};

// ---------------------------------------------------------------------------
// Sensory dissonance

/// Sethares' fit of the Plomp-Levelt roughness curve.
struct PlompLeveltParams {
    double b1 = 3.5;
    double b2 = 5.75;
    double s1 = 0.0207;
    double s2 = 18.96;
    double x_star = 0.24;
};

/// Roughness of two partials, weighted by the product of their amplitudes.
inline double dissonance_pair(double f1, double a1, double f2, double a2, const PlompLeveltParams& p = {})
{
    if (!(f1 > 0.0) || !(f2 > 0.0))
        throw Error(Errc::InvalidFrequency, "partial frequencies must be positive");
    detail::require(a1 >= 0.0 && a2 >= 0.0, Errc::InvalidArgument, "partial amplitudes must be non-negative");
    const double s = p.x_star / (p.s1 * std::min(f1, f2) + p.s2);
    const double x = s * std::abs(f2 - f1);
    return a1 * a2 * (std::exp(-p.b1 * x) - std::exp(-p.b2 * x));
}

/// Sum of pair roughness over all unordered peak pairs, amplitudes scaled so
/// the strongest peak is 1.
inline double frame_dissonance(std::span<const SpectralPeak> peaks, const PlompLeveltParams& p = {})
{
    if (peaks.size() < 2)
        return 0.0;
    double amax = 0.0;
    for (const auto& pk : peaks)
        amax = std::max(amax, pk.amplitude);
    if (!(amax > 0.0))
        return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < peaks.size(); ++i)
        for (std::size_t j = i + 1; j < peaks.size(); ++j)
            total += dissonance_pair(peaks[i].frequency, peaks[i].amplitude / amax, peaks[j].frequency,
                                     peaks[j].amplitude / amax, p);
    return total;
}

/// Analysis settings for the peak-based extractors. The long window resolves
/// partials a semitone apart in the 440 Hz region (about 5 bins at 8192).
struct PeakAnalysisConfig {
    std::size_t window = 8192;
    std::size_t hop = 2048;
    std::size_t max_peaks = 100;
    double floor_db = -60.0;
};

/// Peak lists for every frame of a spectrogram.
inline std::vector<SpectralPeakList> peak_frames(const MagnitudeSpectrogram& spec, std::size_t max_peaks = 100,
                                                 double floor_db = -60.0)
{
    std::vector<SpectralPeakList> frames;
    frames.reserve(spec.n_frames());
    for (std::size_t t = 0; t < spec.n_frames(); ++t)
        frames.push_back(spectral_peaks(spec.frames.row(t), spec.sample_rate, spec.window_size, max_peaks, floor_db));
    return frames;
}

/// Mean frame dissonance over frames with at least two peaks; 0 if none.
inline double sensory_dissonance(std::span<const SpectralPeakList> frames, const PlompLeveltParams& p = {})
{
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& peaks : frames) {
        if (peaks.size() < 2)
            continue;
        total += frame_dissonance(peaks, p);
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

inline double sensory_dissonance(const AudioClip& clip, const PeakAnalysisConfig& cfg = {})
{
    validate(clip);
    if (clip.samples.size() < cfg.window)
        return 0.0;
    const auto frames = peak_frames(stft_magnitude(clip, cfg.window, cfg.hop), cfg.max_peaks, cfg.floor_db);
    return sensory_dissonance(frames);
}

// ---------------------------------------------------------------------------
// Inharmonicity

inline constexpr double kInharmonicityF0Limit = 2000.0;

/// Amplitude-weighted distance of partials from the harmonic grid of the
/// strongest peak below 2 kHz, in units of f0/2, clamped to [0, 0.5].
/// Returns nullopt for frames without such a peak.
inline std::optional<double> inharmonicity_frame(std::span<const SpectralPeak> peaks)
{
    const SpectralPeak* f0_peak = nullptr;
    for (const auto& pk : peaks)
        if (pk.frequency > 0.0 && pk.frequency < kInharmonicityF0Limit &&
            (f0_peak == nullptr || pk.amplitude > f0_peak->amplitude))
            f0_peak = &pk;
    if (f0_peak == nullptr)
        return std::nullopt;
    const double f0 = f0_peak->frequency;
    double weighted = 0.0;
    double weight = 0.0;
    for (const auto& pk : peaks) {
        const double k = std::max(1.0, std::round(pk.frequency / f0));
        weighted += pk.amplitude * std::abs(pk.frequency - k * f0) / (f0 / 2.0);
        weight += pk.amplitude;
    }
    if (!(weight > 0.0))
        return std::nullopt;
    return std::clamp(weighted / weight, 0.0, 0.5);
}

inline double inharmonicity(std::span<const SpectralPeakList> frames)
{
    double total = 0.0;
    std::size_t voiced = 0;
    for (const auto& peaks : frames) {
        if (auto v = inharmonicity_frame(peaks)) {
            total += *v;
            ++voiced;
        }
    }
    return voiced ? total / static_cast<double>(voiced) : 0.0;
}

inline double inharmonicity(const AudioClip& clip, const PeakAnalysisConfig& cfg = {})
{
    validate(clip);
    if (clip.samples.size() < cfg.window)
        return 0.0;
    return inharmonicity(peak_frames(stft_magnitude(clip, cfg.window, cfg.hop), cfg.max_peaks, cfg.floor_db));
}

// ---------------------------------------------------------------------------
// Rhythm

struct PulseClarity {
    double value = 0.0;
    std::size_t lag = 0; // frames; 0 when undefined
};

/// Largest normalized autocorrelation r[lag] / r[0] over lags spanning
/// `min_bpm`..`max_bpm`.
inline PulseClarity pulse_clarity_detail(const OnsetEnvelope& env, double min_bpm = 40.0, double max_bpm = 200.0)
{
    detail::require(env.frame_rate > 0.0, Errc::InvalidArgument, "envelope frame rate must be positive");
    const auto min_lag = static_cast<std::size_t>(std::max(1.0, std::ceil(env.frame_rate * 60.0 / max_bpm)));
    const auto max_lag = static_cast<std::size_t>(std::floor(env.frame_rate * 60.0 / min_bpm));
    const auto& e = env.values;
    if (e.size() < 2 * max_lag)
        throw Error(Errc::EnvelopeTooShort,
                    std::to_string(e.size()) + " frames < " + std::to_string(2 * max_lag) + " required");

    const auto autocorr = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t t = 0; t + lag < e.size(); ++t)
            acc += e[t] * e[t + lag];
        return acc;
    };
    const double r0 = autocorr(0);
    if (!(r0 > 0.0))
        return {};
    PulseClarity best;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
        const double r = autocorr(lag) / r0;
        if (r > best.value || best.lag == 0) {
            best.value = r;
            best.lag = lag;
        }
    }
    best.value = std::clamp(best.value, 0.0, 1.0);
    return best;
}

inline double pulse_clarity(const OnsetEnvelope& env) { return pulse_clarity_detail(env).value; }

/// Mean amplitude rise (peak minus preceding valley) over onsets, where an
/// onset is a local maximum above mean + k * std of the envelope.
inline double attack_leap(const OnsetEnvelope& env, double threshold_stds = 1.0)
{
    const auto& e = env.values;
    detail::require(!e.empty(), Errc::InvalidArgument, "onset envelope is empty");
    const double n = static_cast<double>(e.size());
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / n;
    double var = 0.0;
    for (double v : e)
        var += (v - mean) * (v - mean);
    const double threshold = mean + threshold_stds * std::sqrt(var / n);

    double total = 0.0;
    std::size_t onsets = 0;
    for (std::size_t t = 0; t < e.size(); ++t) {
        const bool rises = t == 0 || e[t] > e[t - 1];
        const bool holds = t + 1 == e.size() || e[t] >= e[t + 1];
        if (!(e[t] > threshold) || !rises || !holds)
            continue;
        std::size_t j = t;
        while (j > 0 && e[j - 1] <= e[j])
            --j;
        total += e[t] - e[j];
        ++onsets;
    }
    return onsets ? total / static_cast<double>(onsets) : 0.0;
}

// ---------------------------------------------------------------------------
// Tonality

using TonalCentroid = std::array<double, 6>;

/// Chroma-weighted position on the circles of fifths, minor thirds and
/// major thirds (radii 1, 1, 0.5).
inline TonalCentroid tonal_centroid(std::span<const double> chroma_frame)
{
    TonalCentroid c{};
    double total = 0.0;
    for (std::size_t l = 0; l < 12 && l < chroma_frame.size(); ++l) {
        const double w = chroma_frame[l];
        const double pc = static_cast<double>(l);
        c[0] += w * std::sin(pc * 7.0 * std::numbers::pi / 6.0);
        c[1] += w * std::cos(pc * 7.0 * std::numbers::pi / 6.0);
        c[2] += w * std::sin(pc * 3.0 * std::numbers::pi / 2.0);
        c[3] += w * std::cos(pc * 3.0 * std::numbers::pi / 2.0);
        c[4] += 0.5 * w * std::sin(pc * 2.0 * std::numbers::pi / 3.0);
        c[5] += 0.5 * w * std::cos(pc * 2.0 * std::numbers::pi / 3.0);
        total += w;
    }
    if (total > 0.0)
        for (double& v : c)
            v /= total;
    return c;
}

/// Mean Euclidean distance between consecutive tonal centroids.
inline double hcdf(const ChromaGram& chroma)
{
    if (chroma.n_frames() < 2)
        throw Error(Errc::TooFewFrames, "HCDF needs at least 2 chroma frames");
    TonalCentroid prev = tonal_centroid(chroma.frames.row(0));
    double total = 0.0;
    for (std::size_t t = 1; t < chroma.n_frames(); ++t) {
        const TonalCentroid cur = tonal_centroid(chroma.frames.row(t));
        double d2 = 0.0;
        for (std::size_t i = 0; i < 6; ++i)
            d2 += (cur[i] - prev[i]) * (cur[i] - prev[i]);
        total += std::sqrt(d2);
        prev = cur;
    }
    return total / static_cast<double>(chroma.n_frames() - 1);
}

/// Krumhansl-Kessler probe-tone ratings, tonic first.
inline constexpr std::array<double, 12> kMajorProfile = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                         2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
inline constexpr std::array<double, 12> kMinorProfile = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                         2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

namespace detail {

// 0 when either side is constant.
inline double profile_correlation(const std::array<double, 12>& x, const std::array<double, 12>& profile,
                                  std::size_t tonic)
{
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        mx += x[i];
        my += profile[i];
    }
    mx /= 12.0;
    my /= 12.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        const double dx = x[i] - mx;
        const double dy = profile[(i + 12 - tonic) % 12] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace detail

/// Best major-key correlation minus best minor-key correlation of the
/// time-averaged chroma, clamped to [-1, 1].
inline double majorness(const ChromaGram& chroma)
{
    detail::require(chroma.n_frames() >= 1, Errc::TooFewFrames, "majorness needs at least one chroma frame");
    std::array<double, 12> avg{};
    for (std::size_t t = 0; t < chroma.n_frames(); ++t) {
        const auto row = chroma.frames.row(t);
        for (std::size_t i = 0; i < 12; ++i)
            avg[i] += row[i];
    }
    double best_major = -1.0, best_minor = -1.0;
    for (std::size_t k = 0; k < 12; ++k) {
        best_major = std::max(best_major, detail::profile_correlation(avg, kMajorProfile, k));
        best_minor = std::max(best_minor, detail::profile_correlation(avg, kMinorProfile, k));
    }
    return std::clamp(best_major - best_minor, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Composite

struct ExtractorConfig {
    PeakAnalysisConfig peaks{};
    std::size_t onset_window = 2048;
    double onset_frame_rate = 100.0; // hop = round(sample_rate / onset_frame_rate)
    std::size_t onset_mels = 299;
    double onset_fmax = 18000.0; // limited to sr / 2
    // Log-mel cells more than top_db below the clip maximum are raised to that
    // floor, and envelope values under `onset_gate` (nats summed over bands)
    // are zeroed. Without both, the leakage skirts of a steady tone flicker
    // periodically with the hop and read as a strong pulse.
    double onset_top_db = 80.0;
    double onset_gate = 10.0;
    double attack_threshold_stds = 1.0;
};

/// Intermediates shared by the individual extractors.
struct ExtractionIntermediates {
    MagnitudeSpectrogram tonal_spectrum; // long-window spectrogram for peaks and chroma
    std::vector<SpectralPeakList> peaks;
    ChromaGram chroma;
    OnsetEnvelope onsets;
};

inline ExtractionIntermediates compute_intermediates(const AudioClip& clip, const ExtractorConfig& cfg = {})
{
    validate(clip);
    ExtractionIntermediates im;
    im.tonal_spectrum = stft_magnitude(clip, cfg.peaks.window, cfg.peaks.hop);
    im.peaks = peak_frames(im.tonal_spectrum, cfg.peaks.max_peaks, cfg.peaks.floor_db);
    im.chroma = chroma(im.tonal_spectrum);
    const auto hop = static_cast<std::size_t>(std::max(1L, std::lround(clip.sample_rate / cfg.onset_frame_rate)));
    const auto onset_spec = stft_magnitude(clip, cfg.onset_window, hop);
    const double fmax = std::min(cfg.onset_fmax, clip.sample_rate / 2.0);
    MelSpectrogram mel = mel_spectrogram(onset_spec, std::min(cfg.onset_mels, onset_spec.n_bins()), fmax);
    const auto cells = mel.frames.data();
    const double floor = *std::max_element(cells.begin(), cells.end()) - cfg.onset_top_db * std::log(10.0) / 10.0;
    for (double& v : cells)
        v = std::max(v, floor);
    im.onsets = onset_envelope(mel);
    for (double& v : im.onsets.values)
        if (v < cfg.onset_gate)
            v = 0.0;
    return im;
}

inline HandcraftedFeatures extract_all(const ExtractionIntermediates& im, const ExtractorConfig& cfg = {})
{
    HandcraftedFeatures f;
    f.dissonance = sensory_dissonance(im.peaks);
    f.inharmonicity = inharmonicity(im.peaks);
    f.pulse_clarity = pulse_clarity(im.onsets);
    f.attack_leap = attack_leap(im.onsets, cfg.attack_threshold_stds);
    f.hcdf_mean = hcdf(im.chroma);
    f.majorness = majorness(im.chroma);
    return f;
}

inline HandcraftedFeatures extract_all(const AudioClip& clip, const ExtractorConfig& cfg = {})
{
    return extract_all(compute_intermediates(clip, cfg), cfg);
}

} // namespace midlevel

#pragma once

// Signal-processing frontend: WAV input, STFT, mel and chroma
// representations, onset envelopes and spectral peak picking.

#include "midlevel/detail/fft.hpp"
#include "midlevel/detail/random.hpp"
#include "midlevel/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace midlevel {

inline constexpr int kDefaultSampleRate = 44100;

/// Mono sample buffer. Samples are nominally in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kDefaultSampleRate;

    double duration() const noexcept
    {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

inline void validate(const AudioClip& clip)
{
    detail::require(!clip.samples.empty(), Errc::InvalidArgument, "audio clip is empty");
    detail::require(clip.sample_rate > 0, Errc::InvalidArgument, "sample rate must be positive");
    for (double s : clip.samples)
        detail::require(std::isfinite(s), Errc::InvalidArgument, "audio clip contains non-finite samples");
}

/// Dense row-major matrix of frames; row = time frame.
class FrameMatrix {
public:
    FrameMatrix() = default;
    FrameMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const FrameMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct MagnitudeSpectrogram {
    FrameMatrix frames; // n_frames x (window_size / 2 + 1)
    std::size_t window_size = 0;
    std::size_t hop = 0;
    int sample_rate = kDefaultSampleRate;

    std::size_t n_frames() const noexcept { return frames.rows(); }
    std::size_t n_bins() const noexcept { return frames.cols(); }
    double bin_width() const noexcept { return static_cast<double>(sample_rate) / static_cast<double>(window_size); }
    double bin_frequency(std::size_t bin) const noexcept { return static_cast<double>(bin) * bin_width(); }
    double frame_rate() const noexcept { return static_cast<double>(sample_rate) / static_cast<double>(hop); }
};

/// Log-compressed mel energies, n_frames x n_mels.
struct MelSpectrogram {
    FrameMatrix frames;
    double fmax = 18000.0;
    double frame_rate = 0.0;

    std::size_t n_frames() const noexcept { return frames.rows(); }
    std::size_t n_mels() const noexcept { return frames.cols(); }
};

/// Square time x mel crop scaled to [0, 1].
struct MelPatch {
    FrameMatrix values;
    std::size_t offset = 0;
};

/// Pitch-class energy per frame, columns C, C#, ..., B.
struct ChromaGram {
    FrameMatrix frames;
    std::size_t n_frames() const noexcept { return frames.rows(); }
};

struct OnsetEnvelope {
    std::vector<double> values;
    double frame_rate = 0.0;
};

struct SpectralPeak {
    double frequency = 0.0; // Hz
    double amplitude = 0.0; // linear magnitude
};
using SpectralPeakList = std::vector<SpectralPeak>;

// ---------------------------------------------------------------------------
// WAV input/output

namespace detail {

inline std::uint32_t read_le(const unsigned char* p, std::size_t bytes) noexcept
{
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i)
        v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline void write_le(std::ostream& os, std::uint32_t v, std::size_t bytes)
{
    for (std::size_t i = 0; i < bytes; ++i)
        os.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

} // namespace detail

/// Linear-interpolation resampler. Quality is modest; output is deterministic.
inline AudioClip resample_linear(const AudioClip& clip, int target_rate)
{
    detail::require(target_rate > 0, Errc::InvalidArgument, "target rate must be positive");
    if (clip.sample_rate == target_rate || clip.samples.empty())
        return AudioClip{clip.samples, target_rate};
    const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
    const std::size_t n_in = clip.samples.size();
    const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(n_in - 1) / ratio)) + 1;
    AudioClip out{std::vector<double>(n_out), target_rate};
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const auto i0 = static_cast<std::size_t>(pos);
        const std::size_t i1 = std::min(i0 + 1, n_in - 1);
        const double frac = pos - static_cast<double>(i0);
        out.samples[i] = clip.samples[i0] * (1.0 - frac) + clip.samples[i1] * frac;
    }
    return out;
}

/// Reads a RIFF/WAVE file: PCM 8/16/24/32-bit integer or 32-bit float, one or
/// two channels. Stereo is averaged to mono. When `resample_to` is set and the
/// file rate differs, the clip is linearly resampled.
inline AudioClip load_wav(const std::filesystem::path& path, std::optional<int> resample_to = kDefaultSampleRate)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto corrupt = [&](const std::string& why) { return Error(Errc::CorruptFile, path.string() + ": " + why); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw corrupt("missing RIFF/WAVE header");

    std::uint32_t format = 0, channels = 0, rate = 0, bits = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = detail::read_le(chunk + 4, 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > bytes.size())
                throw corrupt("truncated fmt chunk");
            format = detail::read_le(bytes.data() + body, 2);
            channels = detail::read_le(bytes.data() + body + 2, 2);
            rate = detail::read_le(bytes.data() + body + 4, 4);
            bits = detail::read_le(bytes.data() + body + 14, 2);
            if (format == 0xFFFE) {
                if (size < 40)
                    throw corrupt("truncated extensible fmt chunk");
                format = detail::read_le(bytes.data() + body + 24, 2); // sub-format GUID prefix
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (body + size > bytes.size())
                throw corrupt("data chunk shorter than declared");
            data = bytes.data() + body;
            data_size = size;
            break;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt)
        throw corrupt("missing fmt chunk");
    if (data == nullptr)
        throw corrupt("missing data chunk");

    const bool is_int = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
    const bool is_float = format == 3 && bits == 32;
    if (!is_int && !is_float)
        throw Error(Errc::UnsupportedFormat,
                    path.string() + ": format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
    if (channels < 1 || channels > 2)
        throw Error(Errc::UnsupportedFormat, path.string() + ": " + std::to_string(channels) + " channels");
    if (rate == 0)
        throw corrupt("zero sample rate");

    const std::size_t sample_bytes = bits / 8;
    const std::size_t frame_bytes = sample_bytes * channels;
    const std::size_t n_frames = data_size / frame_bytes;

    const auto decode = [&](const unsigned char* p) -> double {
        if (is_float) {
            const std::uint32_t raw = detail::read_le(p, 4);
            return static_cast<double>(std::bit_cast<float>(raw));
        }
        switch (bits) {
        case 8:
            return (static_cast<double>(p[0]) - 128.0) / 128.0;
        case 16:
            return static_cast<double>(static_cast<std::int16_t>(detail::read_le(p, 2))) / 32768.0;
        case 24: {
            std::int32_t v = static_cast<std::int32_t>(detail::read_le(p, 3) << 8) >> 8;
            return static_cast<double>(v) / 8388608.0;
        }
        default:
            return static_cast<double>(static_cast<std::int32_t>(detail::read_le(p, 4))) / 2147483648.0;
        }
    };

    AudioClip clip{std::vector<double>(n_frames), static_cast<int>(rate)};
    for (std::size_t i = 0; i < n_frames; ++i) {
        const unsigned char* frame = data + i * frame_bytes;
        double sum = 0.0;
        for (std::size_t c = 0; c < channels; ++c)
            sum += decode(frame + c * sample_bytes);
        clip.samples[i] = sum / channels;
    }
    if (clip.samples.empty())
        throw corrupt("no sample frames");
    for (double s : clip.samples)
        if (!std::isfinite(s))
            throw corrupt("non-finite float sample");

    if (resample_to && *resample_to != clip.sample_rate)
        return resample_linear(clip, *resample_to);
    return clip;
}

enum class WavEncoding { Pcm16, Float32 };

/// Writes a mono WAV file. PCM samples are clamped to [-1, 1].
inline void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding enc = WavEncoding::Pcm16)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error(Errc::IoFailure, "cannot write " + path.string());
    const std::uint32_t bytes_per_sample = enc == WavEncoding::Pcm16 ? 2 : 4;
    const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * bytes_per_sample);
    os.write("RIFF", 4);
    detail::write_le(os, 36 + data_size, 4);
    os.write("WAVEfmt ", 8);
    detail::write_le(os, 16, 4);
    detail::write_le(os, enc == WavEncoding::Pcm16 ? 1 : 3, 2);
    detail::write_le(os, 1, 2);
    detail::write_le(os, static_cast<std::uint32_t>(clip.sample_rate), 4);
    detail::write_le(os, static_cast<std::uint32_t>(clip.sample_rate) * bytes_per_sample, 4);
    detail::write_le(os, bytes_per_sample, 2);
    detail::write_le(os, bytes_per_sample * 8, 2);
    os.write("data", 4);
    detail::write_le(os, data_size, 4);
    for (double s : clip.samples) {
        if (enc == WavEncoding::Pcm16) {
            const double c = std::clamp(s, -1.0, 1.0);
            const auto v = static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L));
            detail::write_le(os, static_cast<std::uint16_t>(v), 2);
        } else {
            detail::write_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(s)), 4);
        }
    }
    if (!os)
        throw Error(Errc::IoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Spectral analysis

/// Number of full analysis frames without center padding.
constexpr std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) noexcept
{
    return length < window ? 0 : 1 + (length - window) / hop;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n)
{
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
    return w;
}

inline MagnitudeSpectrogram stft_magnitude(const AudioClip& clip, std::size_t window = 2048, std::size_t hop = 1536)
{
    detail::require(window >= 2 && hop >= 1, Errc::InvalidArgument, "window must be >= 2 and hop >= 1");
    detail::require(clip.sample_rate > 0, Errc::InvalidArgument, "sample rate must be positive");
    if (clip.samples.size() < window)
        throw Error(Errc::ClipTooShort, std::to_string(clip.samples.size()) + " samples < window " + std::to_string(window));

    const std::size_t n_frames = frame_count(clip.samples.size(), window, hop);
    MagnitudeSpectrogram spec{FrameMatrix(n_frames, window / 2 + 1), window, hop, clip.sample_rate};
    const std::vector<double> w = hann_window(window);
    detail::RealFft fft(window);
    for (std::size_t t = 0; t < n_frames; ++t) {
        auto in = fft.input();
        const double* src = clip.samples.data() + t * hop;
        for (std::size_t i = 0; i < window; ++i)
            in[i] = src[i] * w[i];
        const auto out = fft.execute();
        auto row = spec.frames.row(t);
        for (std::size_t b = 0; b < row.size(); ++b)
            row[b] = std::abs(out[b]);
    }
    return spec;
}

inline double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// One triangular filter: weights for bins [first_bin, first_bin + weights.size()).
struct MelFilter {
    double center_hz = 0.0;
    std::size_t first_bin = 0;
    std::vector<double> weights;
};

/// HTK-scale triangular filters between 0 Hz and fmax, peak value 1.
///
/// Each triangle spans from its left neighbour's center to its right
/// neighbour's center, except that neither half may be narrower than one FFT
/// bin. Without that floor the lowest bands at 299 filters / 2048-point FFT
/// fall between bins and come out identically zero.
inline std::vector<MelFilter> mel_filterbank(std::size_t n_bins, int sample_rate, std::size_t window_size,
                                             std::size_t n_mels, double fmax)
{
    if (!(fmax > 0.0) || fmax > sample_rate / 2.0)
        throw Error(Errc::InvalidRange, "fmax " + std::to_string(fmax) + " outside (0, sr/2]");
    if (n_mels < 1 || n_mels > n_bins)
        throw Error(Errc::InvalidMelCount, std::to_string(n_mels) + " mel bands for " + std::to_string(n_bins) + " bins");

    const double df = static_cast<double>(sample_rate) / static_cast<double>(window_size);
    const double mel_max = hz_to_mel(fmax);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));

    std::vector<MelFilter> bank(n_mels);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double center = edges[m + 1];
        const double left = std::max(center - edges[m], df);
        const double right = std::max(edges[m + 2] - center, df);
        const double lo = center - left;
        const double hi = center + right;
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(lo / df)));
        const auto last = std::min(n_bins - 1, static_cast<std::size_t>(std::floor(hi / df)));
        MelFilter& f = bank[m];
        f.center_hz = center;
        f.first_bin = first;
        for (std::size_t b = first; b <= last; ++b) {
            const double hz = static_cast<double>(b) * df;
            const double w = hz <= center ? (hz - lo) / left : (hi - hz) / right;
            f.weights.push_back(std::max(0.0, w));
        }
    }
    return bank;
}

inline constexpr double kLogFloor = 1e-10;

/// Mel-band power, log(x + 1e-10).
inline MelSpectrogram mel_spectrogram(const MagnitudeSpectrogram& spec, std::size_t n_mels = 299, double fmax = 18000.0)
{
    const auto bank = mel_filterbank(spec.n_bins(), spec.sample_rate, spec.window_size, n_mels, fmax);
    MelSpectrogram mel{FrameMatrix(spec.n_frames(), n_mels), fmax, spec.frame_rate()};
    for (std::size_t t = 0; t < spec.n_frames(); ++t) {
        const auto mag = spec.frames.row(t);
        auto out = mel.frames.row(t);
        for (std::size_t m = 0; m < n_mels; ++m) {
            const MelFilter& f = bank[m];
            double acc = 0.0;
            for (std::size_t i = 0; i < f.weights.size(); ++i) {
                const double a = mag[f.first_bin + i];
                acc += f.weights[i] * a * a;
            }
            out[m] = std::log(acc + kLogFloor);
        }
    }
    return mel;
}

namespace detail {

inline MelPatch normalized_patch(const MelSpectrogram& mel, std::size_t offset, std::size_t length)
{
    MelPatch patch{FrameMatrix(length, mel.n_mels()), offset};
    const auto first = mel.frames.data().begin() + static_cast<std::ptrdiff_t>(offset * mel.n_mels());
    const auto last = first + static_cast<std::ptrdiff_t>(length * mel.n_mels());
    const auto [lo_it, hi_it] = std::minmax_element(first, last);
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    auto out = patch.values.data();
    std::size_t i = 0;
    for (auto it = first; it != last; ++it, ++i)
        out[i] = range > 0.0 ? (*it - lo) / range : 0.0;
    return patch;
}

} // namespace detail

/// Contiguous `length`-frame slice starting at `offset` (length 0 means a
/// square patch of n_mels frames), min-max scaled to [0, 1].
inline MelPatch crop_patch(const MelSpectrogram& mel, std::size_t offset, std::size_t length = 0)
{
    if (length == 0)
        length = mel.n_mels();
    if (mel.n_frames() < length || offset > mel.n_frames() - length)
        throw Error(Errc::TooFewFrames, "need " + std::to_string(length) + " frames from offset " +
                                            std::to_string(offset) + ", have " + std::to_string(mel.n_frames()));
    return detail::normalized_patch(mel, offset, length);
}

/// Same as crop_patch with an offset drawn uniformly from the valid range.
inline MelPatch crop_patch_random(const MelSpectrogram& mel, std::uint64_t seed, std::size_t length = 0)
{
    if (length == 0)
        length = mel.n_mels();
    if (mel.n_frames() < length)
        throw Error(Errc::TooFewFrames,
                    "need " + std::to_string(length) + " frames, have " + std::to_string(mel.n_frames()));
    detail::Rng rng(seed);
    const auto offset = detail::uniform_index(rng, mel.n_frames() - length + 1);
    return detail::normalized_patch(mel, static_cast<std::size_t>(offset), length);
}

inline constexpr std::array<const char*, 12> kPitchClassNames = {"C", "C#", "D", "D#", "E", "F",
                                                                 "F#", "G", "G#", "A", "A#", "B"};

/// Pitch class of a frequency relative to A440 (A = 9).
inline std::size_t pitch_class(double hz) noexcept
{
    const auto semis = static_cast<long>(std::lround(12.0 * std::log2(hz / 440.0))) + 9;
    return static_cast<std::size_t>(((semis % 12) + 12) % 12);
}

/// Folds bin energies between 55 Hz and 8 kHz onto 12 pitch classes; each
/// non-silent frame is L1-normalized.
inline ChromaGram chroma(const MagnitudeSpectrogram& spec)
{
    ChromaGram out{FrameMatrix(spec.n_frames(), 12)};
    std::vector<std::size_t> bin_class(spec.n_bins(), 12);
    for (std::size_t b = 1; b < spec.n_bins(); ++b) {
        const double hz = spec.bin_frequency(b);
        if (hz >= 55.0 && hz <= 8000.0)
            bin_class[b] = pitch_class(hz);
    }
    for (std::size_t t = 0; t < spec.n_frames(); ++t) {
        const auto mag = spec.frames.row(t);
        auto row = out.frames.row(t);
        for (std::size_t b = 0; b < mag.size(); ++b)
            if (bin_class[b] < 12)
                row[bin_class[b]] += mag[b] * mag[b];
        double total = 0.0;
        for (double v : row)
            total += v;
        if (total > 0.0)
            for (double& v : row)
                v /= total;
    }
    return out;
}

/// Half-wave rectified spectral flux summed over mel bands; e[0] = 0.
inline OnsetEnvelope onset_envelope(const MelSpectrogram& mel)
{
    if (mel.n_frames() < 2)
        throw Error(Errc::TooFewFrames, "onset envelope needs at least 2 frames");
    OnsetEnvelope env{std::vector<double>(mel.n_frames(), 0.0), mel.frame_rate};
    for (std::size_t t = 1; t < mel.n_frames(); ++t) {
        const auto cur = mel.frames.row(t);
        const auto prev = mel.frames.row(t - 1);
        double flux = 0.0;
        for (std::size_t m = 0; m < cur.size(); ++m)
            flux += std::max(0.0, cur[m] - prev[m]);
        env.values[t] = flux;
    }
    return env;
}

/// Local maxima of one magnitude frame above max * 10^(floor_db / 20), refined
/// by parabolic interpolation on the dB scale. The strongest `max_peaks` are
/// kept and returned in ascending frequency.
inline SpectralPeakList spectral_peaks(std::span<const double> frame, int sample_rate, std::size_t window_size,
                                       std::size_t max_peaks = 100, double floor_db = -60.0)
{
    detail::require(!frame.empty(), Errc::InvalidArgument, "spectral frame is empty");
    SpectralPeakList peaks;
    if (frame.size() < 3 || max_peaks == 0)
        return peaks;
    const double peak_max = *std::max_element(frame.begin(), frame.end());
    if (!(peak_max > 0.0))
        return peaks;
    const double threshold = peak_max * std::pow(10.0, floor_db / 20.0);
    const double df = static_cast<double>(sample_rate) / static_cast<double>(window_size);
    const auto db = [](double a) { return 20.0 * std::log10(std::max(a, 1e-300)); };

    for (std::size_t k = 1; k + 1 < frame.size(); ++k) {
        const double mid = frame[k];
        if (!(mid > threshold) || !(mid > frame[k - 1]) || !(mid >= frame[k + 1]))
            continue;
        const double a = db(frame[k - 1]);
        const double b = db(mid);
        const double c = db(frame[k + 1]);
        const double denom = a - 2.0 * b + c;
        const double p = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
        const double amp_db = b - 0.25 * (a - c) * p;
        peaks.push_back({(static_cast<double>(k) + p) * df, std::pow(10.0, amp_db / 20.0)});
    }
    if (peaks.size() > max_peaks) {
        std::nth_element(peaks.begin(), peaks.begin() + static_cast<std::ptrdiff_t>(max_peaks), peaks.end(),
                         [](const SpectralPeak& x, const SpectralPeak& y) { return x.amplitude > y.amplitude; });
        peaks.resize(max_peaks);
        std::sort(peaks.begin(), peaks.end(),
                  [](const SpectralPeak& x, const SpectralPeak& y) { return x.frequency < y.frequency; });
    }
    return peaks;
}

} // namespace midlevel

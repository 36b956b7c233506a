#include "midlevel/extractors.hpp"
#include "support/signals.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace midlevel;
namespace mt = midlevel::testing;

namespace {

// Closed form written out independently of dissonance_pair.
double plomp_levelt_reference(double f1, double a1, double f2, double a2)
{
    const double lo = f1 < f2 ? f1 : f2;
    const double s = 0.24 / (0.0207 * lo + 18.96);
    const double d = std::fabs(f1 - f2) * s;
    return a1 * a2 * (std::exp(-3.5 * d) - std::exp(-5.75 * d));
}

ChromaGram chroma_of(std::initializer_list<std::vector<double>> frames)
{
    ChromaGram c{FrameMatrix(frames.size(), 12)};
    std::size_t t = 0;
    for (const auto& f : frames) {
        for (std::size_t i = 0; i < 12; ++i)
            c.frames(t, i) = f[i];
        ++t;
    }
    return c;
}

std::vector<double> pcs(std::initializer_list<std::size_t> classes)
{
    std::vector<double> v(12, 0.0);
    for (std::size_t c : classes)
        v[c] = 1.0 / static_cast<double>(classes.size());
    return v;
}

OnsetEnvelope impulses(std::size_t length, double frame_rate, const std::vector<std::size_t>& at, double height = 1.0)
{
    OnsetEnvelope env{std::vector<double>(length, 0.0), frame_rate};
    for (std::size_t t : at)
        env.values[t] = height;
    return env;
}

} // namespace

TEST(DissonancePair, TrivialCases)
{
    EXPECT_EQ(dissonance_pair(440.0, 1.0, 440.0, 1.0), 0.0);
    EXPECT_EQ(dissonance_pair(440.0, 0.0, 470.0, 1.0), 0.0);
    EXPECT_EQ(dissonance_pair(200.0, 1.0, 1300.0, 0.0), 0.0);
    EXPECT_THROW(dissonance_pair(0.0, 1.0, 440.0, 1.0), Error);
    try {
        dissonance_pair(440.0, 1.0, -5.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvalidFrequency);
    }
}

TEST(DissonancePair, SweepMaximumMatchesOracle)
{
    // 1 Hz sweep of the closed form: peak at 466 Hz (26 Hz above 440),
    // value 0.180769416347357.
    double best = -1.0, best_ref = -1.0;
    int best_f = 0, best_ref_f = 0;
    for (int f2 = 441; f2 <= 660; ++f2) {
        const double d = dissonance_pair(440.0, 1.0, f2, 1.0);
        const double r = plomp_levelt_reference(440.0, 1.0, f2, 1.0);
        EXPECT_NEAR(d, r, 1e-15);
        if (d > best) {
            best = d;
            best_f = f2;
        }
        if (r > best_ref) {
            best_ref = r;
            best_ref_f = f2;
        }
    }
    EXPECT_EQ(best_f, best_ref_f);
    EXPECT_EQ(best_f, 466);
    EXPECT_NEAR(best, 0.180769416347357, 1e-12);
}

TEST(DissonancePair, SymmetryProperty)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> f(20.0, 8000.0), a(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double f1 = f(rng), f2 = f(rng), a1 = a(rng), a2 = a(rng);
        EXPECT_EQ(dissonance_pair(f1, a1, f2, a2), dissonance_pair(f2, a2, f1, a1));
        EXPECT_GE(dissonance_pair(f1, a1, f2, a2), 0.0);
    }
}

TEST(SensoryDissonance, PureToneAndSilenceAreZero)
{
    EXPECT_EQ(sensory_dissonance(mt::sine(440.0, 2.0)), 0.0);
    EXPECT_EQ(sensory_dissonance(mt::silence(2.0)), 0.0);
}

TEST(SensoryDissonance, MinorSecondRougherThanFifth)
{
    const double m2 = sensory_dissonance(mt::tones({{440.0, 0.4}, {466.16, 0.4}}, 2.0));
    const double p5 = sensory_dissonance(mt::tones({{440.0, 0.4}, {660.0, 0.4}}, 2.0));
    // closed-form values for unit amplitudes: 0.1808 vs 0.00136
    EXPECT_GT(plomp_levelt_reference(440.0, 1.0, 466.16, 1.0), plomp_levelt_reference(440.0, 1.0, 660.0, 1.0));
    EXPECT_GT(m2, p5);
    EXPECT_NEAR(m2, plomp_levelt_reference(440.0, 1.0, 466.16, 1.0), 0.02);
}

TEST(SensoryDissonance, GainInvariance)
{
    const AudioClip clip = mt::tones({{300.0, 0.3}, {317.0, 0.2}, {910.0, 0.1}, {1200.0, 0.15}}, 1.5);
    const double ref = sensory_dissonance(clip);
    EXPECT_GT(ref, 0.0);
    for (double gain : {1.0, 0.5, 0.1, 0.013}) {
        AudioClip scaled = clip;
        for (double& s : scaled.samples)
            s *= gain;
        EXPECT_NEAR(sensory_dissonance(scaled), ref, 1e-6) << "gain " << gain;
    }
}

TEST(Inharmonicity, FrameFormula)
{
    const std::vector<SpectralPeak> harmonic = {{220.0, 1.0}, {440.0, 0.5}, {660.0, 0.33}, {880.0, 0.25}};
    EXPECT_EQ(inharmonicity_frame(harmonic).value(), 0.0);

    // f0 = 220; 455 Hz is 15 Hz off the 2nd harmonic: 0.8 * (15 / 110) / 1.8
    const std::vector<SpectralPeak> sharp = {{220.0, 1.0}, {455.0, 0.8}};
    EXPECT_NEAR(inharmonicity_frame(sharp).value(), 0.8 * (15.0 / 110.0) / 1.8, 1e-15);
    EXPECT_NEAR(inharmonicity_frame(sharp).value(), 0.0606060606060606, 1e-15);

    EXPECT_FALSE(inharmonicity_frame({}).has_value());
    const std::vector<SpectralPeak> high = {{2500.0, 1.0}};
    EXPECT_FALSE(inharmonicity_frame(high).has_value());
}

TEST(Inharmonicity, ClipLevel)
{
    // Fundamental on an exact bin of the 8192-point analysis so that every
    // harmonic is bin-centred and interpolation is exact.
    const double f0 = 41.0 * 44100.0 / 8192.0;
    const AudioClip harmonic = mt::tones({{f0, 0.4}, {2 * f0, 0.2}, {3 * f0, 0.13}, {4 * f0, 0.1}}, 2.0);
    EXPECT_LT(inharmonicity(harmonic), 1e-9);

    const AudioClip near_harmonic = mt::tones({{220.0, 0.4}, {440.0, 0.2}, {660.0, 0.13}, {880.0, 0.1}}, 2.0);
    EXPECT_LT(inharmonicity(near_harmonic), 5e-3);

    const AudioClip sharp = mt::tones({{220.0, 0.4}, {455.0, 0.32}}, 2.0);
    EXPECT_NEAR(inharmonicity(sharp), 0.0606, 0.01);

    EXPECT_EQ(inharmonicity(mt::silence(2.0)), 0.0);
}

TEST(PulseClarity, PeriodicEnvelope)
{
    // 100 frames/s, one impulse every 0.5 s (120 BPM)
    std::vector<std::size_t> at;
    for (std::size_t t = 10; t < 1500; t += 50)
        at.push_back(t);
    const auto env = impulses(1500, 100.0, at);
    const PulseClarity pc = pulse_clarity_detail(env);
    EXPECT_GE(pc.value, 0.9);
    EXPECT_EQ(pc.lag, 50u);
    EXPECT_EQ(pulse_clarity(env), pc.value);
}

TEST(PulseClarity, RandomTimingIsLower)
{
    std::vector<std::size_t> at;
    for (std::size_t t = 10; t < 1500; t += 50)
        at.push_back(t);
    const double periodic = pulse_clarity(impulses(1500, 100.0, at));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pos(0, 1499);
        std::vector<std::size_t> random_at(at.size());
        for (auto& t : random_at)
            t = pos(rng);
        const double v = pulse_clarity(impulses(1500, 100.0, random_at));
        EXPECT_LT(v, periodic) << "seed " << seed;
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(PulseClarity, ZeroAndTooShort)
{
    EXPECT_EQ(pulse_clarity(OnsetEnvelope{std::vector<double>(400, 0.0), 100.0}), 0.0);
    try {
        pulse_clarity(OnsetEnvelope{std::vector<double>(100, 1.0), 100.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EnvelopeTooShort);
    }
}

TEST(PulseClarity, RangeProperty)
{
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> ex(1.0);
    for (int trial = 0; trial < 50; ++trial) {
        OnsetEnvelope env{std::vector<double>(400), 100.0};
        for (double& v : env.values)
            v = ex(rng);
        const double pc = pulse_clarity(env);
        EXPECT_GE(pc, 0.0);
        EXPECT_LE(pc, 1.0);
    }
}

TEST(AttackLeap, HandCases)
{
    EXPECT_EQ(attack_leap(OnsetEnvelope{std::vector<double>(10, 0.0), 100.0}), 0.0);
    EXPECT_DOUBLE_EQ(attack_leap(impulses(5, 100.0, {2}, 3.5)), 3.5);
    OnsetEnvelope two = impulses(10, 100.0, {2, 6});
    two.values[2] = 2.0;
    two.values[6] = 4.0;
    EXPECT_DOUBLE_EQ(attack_leap(two), 3.0);
}

TEST(AttackLeap, ValleyIsPrecedingMinimum)
{
    // rise from 1 to 5 after a dip: leap 4
    const OnsetEnvelope env{{2.0, 1.0, 3.0, 5.0, 0.0, 0.0, 0.0, 0.0}, 100.0};
    EXPECT_DOUBLE_EQ(attack_leap(env), 4.0);
}

TEST(Hcdf, ConstantIsZero)
{
    const auto c = chroma_of({pcs({0, 4, 7}), pcs({0, 4, 7}), pcs({0, 4, 7})});
    EXPECT_EQ(hcdf(c), 0.0);
    EXPECT_THROW(hcdf(chroma_of({pcs({0})})), Error);
}

TEST(Hcdf, TritoneChangeExceedsFifthChange)
{
    const auto c = pcs({0, 4, 7}), fs = pcs({6, 10, 1}), g = pcs({7, 11, 2});
    const double far = hcdf(chroma_of({c, fs, c, fs}));
    const double near = hcdf(chroma_of({c, g, c, g}));
    EXPECT_GT(far, near);

    // Oracle: direct 6-D distance.
    const auto centroid = [](const std::vector<double>& v) {
        std::array<double, 6> out{};
        for (int l = 0; l < 12; ++l) {
            const double pi = 3.14159265358979323846;
            out[0] += v[l] * std::sin(l * 7 * pi / 6);
            out[1] += v[l] * std::cos(l * 7 * pi / 6);
            out[2] += v[l] * std::sin(l * 3 * pi / 2);
            out[3] += v[l] * std::cos(l * 3 * pi / 2);
            out[4] += 0.5 * v[l] * std::sin(l * 2 * pi / 3);
            out[5] += 0.5 * v[l] * std::cos(l * 2 * pi / 3);
        }
        return out;
    };
    const auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
        const auto x = centroid(a), y = centroid(b);
        double s = 0;
        for (int i = 0; i < 6; ++i)
            s += (x[i] - y[i]) * (x[i] - y[i]);
        return std::sqrt(s);
    };
    EXPECT_NEAR(far, dist(c, fs), 1e-12);
    EXPECT_NEAR(near, dist(c, g), 1e-12);
}

TEST(Hcdf, SingleTranspositionIsLocal)
{
    ChromaGram c{FrameMatrix(8, 12)};
    for (std::size_t t = 0; t < 8; ++t)
        c.frames(t, t < 5 ? 3 : 4) = 1.0;
    std::size_t nonzero = 0;
    for (std::size_t t = 1; t < 8; ++t) {
        ChromaGram pair{FrameMatrix(2, 12)};
        for (std::size_t i = 0; i < 12; ++i) {
            pair.frames(0, i) = c.frames(t - 1, i);
            pair.frames(1, i) = c.frames(t, i);
        }
        if (hcdf(pair) > 0.0)
            ++nonzero;
    }
    EXPECT_EQ(nonzero, 1u);
    EXPECT_GT(hcdf(c), 0.0);
}

TEST(Hcdf, NonNegativeAndZeroForRepeatsProperty)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        ChromaGram c{FrameMatrix(4, 12)};
        for (std::size_t i = 0; i < 12; ++i) {
            c.frames(0, i) = u(rng);
            c.frames(1, i) = c.frames(0, i);
            c.frames(2, i) = u(rng);
            c.frames(3, i) = c.frames(2, i);
        }
        EXPECT_GE(hcdf(c), 0.0);
        ChromaGram repeat{FrameMatrix(2, 12)};
        for (std::size_t i = 0; i < 12; ++i)
            repeat.frames(0, i) = repeat.frames(1, i) = c.frames(0, i);
        EXPECT_EQ(hcdf(repeat), 0.0);
    }
}

TEST(Majorness, TriadSigns)
{
    // Profile-correlation oracle (numpy): C major +0.0735, C minor -0.2879.
    EXPECT_NEAR(majorness(chroma_of({pcs({0, 4, 7})})), 0.07353459706944299, 1e-12);
    EXPECT_NEAR(majorness(chroma_of({pcs({0, 3, 7})})), -0.2878790643318221, 1e-12);
    EXPECT_GT(majorness(chroma_of({pcs({0, 4, 7})})), 0.0);
    EXPECT_LT(majorness(chroma_of({pcs({0, 3, 7})})), 0.0);
}

TEST(Majorness, DegenerateChroma)
{
    EXPECT_EQ(majorness(chroma_of({std::vector<double>(12, 1.0 / 12)})), 0.0);
    EXPECT_EQ(majorness(chroma_of({std::vector<double>(12, 0.0)})), 0.0);
}

TEST(Majorness, TranspositionInvarianceProperty)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(12);
        for (double& x : v)
            x = u(rng);
        const double ref = majorness(chroma_of({v}));
        EXPECT_GE(ref, -1.0);
        EXPECT_LE(ref, 1.0);
        for (std::size_t k = 1; k < 12; ++k) {
            std::vector<double> r(12);
            for (std::size_t i = 0; i < 12; ++i)
                r[(i + k) % 12] = v[i];
            EXPECT_NEAR(majorness(chroma_of({r})), ref, 1e-9);
        }
    }
}

TEST(ExtractAll, PureSine)
{
    const HandcraftedFeatures f = extract_all(mt::sine(440.0, 15.0));
    EXPECT_EQ(f.dissonance, 0.0);
    EXPECT_EQ(f.inharmonicity, 0.0);
    EXPECT_LT(f.pulse_clarity, 0.05);
    EXPECT_GT(f.majorness, -1.0001);
}

TEST(ExtractAll, ClickTrainMatchesDirectPulseClarity)
{
    const AudioClip clip = mt::click_train(120.0, 15.0);
    const auto im = compute_intermediates(clip);
    const HandcraftedFeatures f = extract_all(im);
    EXPECT_NEAR(f.pulse_clarity, pulse_clarity(im.onsets), 0.05);
    EXPECT_GE(f.pulse_clarity, 0.9);
    EXPECT_NEAR(static_cast<double>(pulse_clarity_detail(im.onsets).lag), 0.5 * im.onsets.frame_rate, 1.0);
}

TEST(ExtractAll, StrummedMajorTriad)
{
    // C4 E4 G4 with four harmonics each, staggered 40 ms, exponential decay.
    const int sr = 44100;
    AudioClip clip = mt::silence(4.0);
    const double notes[] = {261.63, 329.63, 392.0};
    for (int n = 0; n < 3; ++n) {
        const auto start = static_cast<std::size_t>(0.04 * n * sr);
        for (std::size_t i = start; i < clip.samples.size(); ++i) {
            const double t = static_cast<double>(i - start) / sr;
            double s = 0.0;
            for (int h = 1; h <= 4; ++h)
                s += std::sin(2.0 * 3.14159265358979323846 * notes[n] * h * t) / h;
            clip.samples[i] += 0.2 * s * std::exp(-0.6 * t);
        }
    }
    EXPECT_GT(extract_all(clip).majorness, 0.0);
}

TEST(ExtractAll, EqualsCompositionOfParts)
{
    const AudioClip clip = mt::tones({{220.0, 0.3}, {233.0, 0.2}, {660.0, 0.1}}, 4.0);
    const auto im = compute_intermediates(clip);
    const HandcraftedFeatures f = extract_all(clip);
    EXPECT_EQ(f.dissonance, sensory_dissonance(im.peaks));
    EXPECT_EQ(f.dissonance, sensory_dissonance(clip));
    EXPECT_EQ(f.inharmonicity, inharmonicity(im.peaks));
    EXPECT_EQ(f.inharmonicity, inharmonicity(clip));
    EXPECT_EQ(f.majorness, majorness(im.chroma));
    EXPECT_EQ(f.hcdf_mean, hcdf(im.chroma));
    EXPECT_EQ(f, extract_all(clip));
}

#pragma once

#include "midlevel/error.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace midlevel {

/// The seven perceptual mid-level features, in canonical order.
enum class MidLevelName {
    Melodiousness,
    Articulation,
    RhythmicStability,
    RhythmicComplexity,
    Dissonance,
    TonalStability,
    Modality,
};

inline constexpr std::size_t kMidLevelCount = 7;

inline constexpr std::array<MidLevelName, kMidLevelCount> kMidLevelNames = {
    MidLevelName::Melodiousness,      MidLevelName::Articulation, MidLevelName::RhythmicStability,
    MidLevelName::RhythmicComplexity, MidLevelName::Dissonance,   MidLevelName::TonalStability,
    MidLevelName::Modality,
};

constexpr std::size_t index_of(MidLevelName name) noexcept { return static_cast<std::size_t>(name); }

/// Canonical snake_case column name.
constexpr std::string_view to_string(MidLevelName name) noexcept
{
    constexpr std::array<std::string_view, kMidLevelCount> names = {
        "melodiousness", "articulation", "rhythmic_stability", "rhythmic_complexity",
        "dissonance",    "tonal_stability", "modality",
    };
    return names[index_of(name)];
}

/// Accepts canonical names plus the aliases used by the released annotation
/// archive (e.g. "rhythm_stability", "minorness").
inline std::optional<MidLevelName> parse_midlevel_name(std::string_view text)
{
    std::string key;
    for (char c : text) {
        if (c == ' ' || c == '-' || c == '.')
            key.push_back('_');
        else
            key.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    }
    for (MidLevelName n : kMidLevelNames)
        if (key == to_string(n))
            return n;

    struct Alias {
        std::string_view key;
        MidLevelName name;
    };
    constexpr Alias aliases[] = {
        {"melody", MidLevelName::Melodiousness},
        {"melodious", MidLevelName::Melodiousness},
        {"rhythm_stability", MidLevelName::RhythmicStability},
        {"r_stability", MidLevelName::RhythmicStability},
        {"rhythm_complexity", MidLevelName::RhythmicComplexity},
        {"r_complexity", MidLevelName::RhythmicComplexity},
        {"mode", MidLevelName::Modality},
        {"minorness", MidLevelName::Modality},
    };
    for (const Alias& a : aliases)
        if (key == a.key)
            return a.name;
    return std::nullopt;
}

} // namespace midlevel

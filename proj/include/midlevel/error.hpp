#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace midlevel {

/// Failure categories raised by the toolkit. Every thrown midlevel::Error
/// carries exactly one of these.
enum class Errc {
    InvalidArgument,
    // audio
    UnsupportedFormat,
    CorruptFile,
    ClipTooShort,
    InvalidRange,
    InvalidMelCount,
    TooFewFrames,
    // extractors
    InvalidFrequency,
    EnvelopeTooShort,
    // annotation
    EmptyInput,
    TooFewSongs,
    IncompleteMatrix,
    DegenerateVariance,
    ConstantFeature,
    // statmodels
    LengthMismatch,
    ConstantInput,
    TooFewItems,
    TooFewGroups,
    SingularSystem,
    TooFewRows,
    NonPositiveHyperparam,
    DegenerateClass,
    SingleClass,
    InsufficientOverlap,
    // neural
    ShapeMismatch,
    StaleCache,
    EmptyDataset,
    MissingHead,
    // dataset io
    UnknownSchema,
    OutOfRangeRating,
    SelfComparison,
    UnknownFeature,
    DuplicateSongId,
    IoFailure,
    NetworkFailure,
    ChecksumMismatch,
    // cli
    NoInputs,
    MissingCheckpoint,
};

constexpr std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::ClipTooShort: return "ClipTooShort";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::InvalidMelCount: return "InvalidMelCount";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::InvalidFrequency: return "InvalidFrequency";
    case Errc::EnvelopeTooShort: return "EnvelopeTooShort";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::TooFewSongs: return "TooFewSongs";
    case Errc::IncompleteMatrix: return "IncompleteMatrix";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::ConstantFeature: return "ConstantFeature";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::TooFewItems: return "TooFewItems";
    case Errc::TooFewGroups: return "TooFewGroups";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::NonPositiveHyperparam: return "NonPositiveHyperparam";
    case Errc::DegenerateClass: return "DegenerateClass";
    case Errc::SingleClass: return "SingleClass";
    case Errc::InsufficientOverlap: return "InsufficientOverlap";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleCache: return "StaleCache";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::MissingHead: return "MissingHead";
    case Errc::UnknownSchema: return "UnknownSchema";
    case Errc::OutOfRangeRating: return "OutOfRangeRating";
    case Errc::SelfComparison: return "SelfComparison";
    case Errc::UnknownFeature: return "UnknownFeature";
    case Errc::DuplicateSongId: return "DuplicateSongId";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NetworkFailure: return "NetworkFailure";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::NoInputs: return "NoInputs";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

namespace detail {

inline void require(bool condition, Errc code, const std::string& what)
{
    if (!condition)
        throw Error(code, what);
}

} // namespace detail
} // namespace midlevel

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace frailty {

/// Every failure the library reports. The enumerator name is the
/// machine-readable code printed by the CLI.
enum class Errc {
    // volume_io
    HeaderTooShort,
    BadHeaderSize,
    BadMagic,
    UnsupportedDatatype,
    BadDims,
    PayloadTruncated,
    NonFiniteValue,
    ShapeMismatch,
    IllegalLabel,
    NoTumorVoxels,
    // views / aggregation
    ZeroSampleCount,
    LengthMismatch,
    EmptyInput,
    // predictor
    TooFewSamples,
    NonFiniteInput,
    SingularSystem,
    DuplicatePatient,
    NonNumericField,
    MissingColumn,
    // cv
    TooFewPatients,
    DuplicateIds,
    MissingCase,
    PredictorFailure,
    // discrepancy
    DegenerateX,
    DegenerateResiduals,
    // cohort_io
    BadEnumValue,
    NonPositiveTime,
    EmptyCohortAfterExclusion,
    MissingDiscrepancy,
    MissingGrade,
    // survival
    DimensionMismatch,
    NoEvents,
    SingularInformation,
    MonotoneLikelihood,
    NotConverged,
    NonFiniteZ,
    // report
    LabelMismatch,
    EmptyRows,
    NonPositiveHR,
    EmptyTable,
    // plumbing
    ConfigError,
    IoFailure,
};

/// Broad class of a failure; drives the CLI exit code.
enum class ErrorKind { config, data, numeric };

constexpr std::string_view errc_name(Errc c) noexcept
{
    switch (c) {
    case Errc::HeaderTooShort: return "HeaderTooShort";
    case Errc::BadHeaderSize: return "BadHeaderSize";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedDatatype: return "UnsupportedDatatype";
    case Errc::BadDims: return "BadDims";
    case Errc::PayloadTruncated: return "PayloadTruncated";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IllegalLabel: return "IllegalLabel";
    case Errc::NoTumorVoxels: return "NoTumorVoxels";
    case Errc::ZeroSampleCount: return "ZeroSampleCount";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::DuplicatePatient: return "DuplicatePatient";
    case Errc::NonNumericField: return "NonNumericField";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::TooFewPatients: return "TooFewPatients";
    case Errc::DuplicateIds: return "DuplicateIds";
    case Errc::MissingCase: return "MissingCase";
    case Errc::PredictorFailure: return "PredictorFailure";
    case Errc::DegenerateX: return "DegenerateX";
    case Errc::DegenerateResiduals: return "DegenerateResiduals";
    case Errc::BadEnumValue: return "BadEnumValue";
    case Errc::NonPositiveTime: return "NonPositiveTime";
    case Errc::EmptyCohortAfterExclusion: return "EmptyCohortAfterExclusion";
    case Errc::MissingDiscrepancy: return "MissingDiscrepancy";
    case Errc::MissingGrade: return "MissingGrade";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoEvents: return "NoEvents";
    case Errc::SingularInformation: return "SingularInformation";
    case Errc::MonotoneLikelihood: return "MonotoneLikelihood";
    case Errc::NotConverged: return "NotConverged";
    case Errc::NonFiniteZ: return "NonFiniteZ";
    case Errc::LabelMismatch: return "LabelMismatch";
    case Errc::EmptyRows: return "EmptyRows";
    case Errc::NonPositiveHR: return "NonPositiveHR";
    case Errc::EmptyTable: return "EmptyTable";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

constexpr ErrorKind error_kind(Errc c) noexcept
{
    switch (c) {
    case Errc::ConfigError:
        return ErrorKind::config;
    case Errc::DegenerateX:
    case Errc::DegenerateResiduals:
    case Errc::SingularSystem:
    case Errc::SingularInformation:
    case Errc::MonotoneLikelihood:
    case Errc::NotConverged:
    case Errc::NonFiniteZ:
        return ErrorKind::numeric;
    default:
        return ErrorKind::data;
    }
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail)
        , code_(code)
        , detail_(detail)
    {
    }

    Errc code() const noexcept { return code_; }
    ErrorKind kind() const noexcept { return error_kind(code_); }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

} // namespace frailty

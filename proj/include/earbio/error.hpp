#ifndef EARBIO_ERROR_HPP
#define EARBIO_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace earbio {

enum class Errc {
    FileNotFound,
    UnsupportedFormat,
    CorruptImage,
    IoError,
    AlreadyGrayscale,
    InvalidSigma,
    ImageTooSmall,
    ThresholdOrder,
    AlreadyFinalized,
    DegenerateTarget,
    InvalidMargins,
    SingularMatrix,
    OutOfBounds,
    NegativeFactor,
    NotRgb,
    ShiftOutOfRange,
    InvalidConfig,
    EmptyDataset,
    NoLabelMatch,
    UnreadableFile,
    SingletonClass,
    SchemaVersionMismatch,
    MalformedManifest,
    ShapeMismatch,
    OddSpatialDims,
    LabelOutOfRange,
    EmptyTrainSplit,
    EmptyTestSplit,
    InvalidArgument,
};

inline std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::FileNotFound: return "FileNotFound";
        case Errc::UnsupportedFormat: return "UnsupportedFormat";
        case Errc::CorruptImage: return "CorruptImage";
        case Errc::IoError: return "IoError";
        case Errc::AlreadyGrayscale: return "AlreadyGrayscale";
        case Errc::InvalidSigma: return "InvalidSigma";
        case Errc::ImageTooSmall: return "ImageTooSmall";
        case Errc::ThresholdOrder: return "ThresholdOrder";
        case Errc::AlreadyFinalized: return "AlreadyFinalized";
        case Errc::DegenerateTarget: return "DegenerateTarget";
        case Errc::InvalidMargins: return "InvalidMargins";
        case Errc::SingularMatrix: return "SingularMatrix";
        case Errc::OutOfBounds: return "OutOfBounds";
        case Errc::NegativeFactor: return "NegativeFactor";
        case Errc::NotRgb: return "NotRgb";
        case Errc::ShiftOutOfRange: return "ShiftOutOfRange";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::NoLabelMatch: return "NoLabelMatch";
        case Errc::UnreadableFile: return "UnreadableFile";
        case Errc::SingletonClass: return "SingletonClass";
        case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
        case Errc::MalformedManifest: return "MalformedManifest";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::OddSpatialDims: return "OddSpatialDims";
        case Errc::LabelOutOfRange: return "LabelOutOfRange";
        case Errc::EmptyTrainSplit: return "EmptyTrainSplit";
        case Errc::EmptyTestSplit: return "EmptyTestSplit";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` tells the kind.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace earbio

#endif

#include "respnet/error.hpp"

namespace respnet {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedName: return "MalformedName";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::NonMonotoneCycle: return "NonMonotoneCycle";
    case Errc::UnknownDiagnosis: return "UnknownDiagnosis";
    case Errc::SplitLeak: return "SplitLeak";
    case Errc::MissingAnnotation: return "MissingAnnotation";
    case Errc::MissingSplitEntry: return "MissingSplitEntry";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::EmptyClip: return "EmptyClip";
    case Errc::BandOutOfRange: return "BandOutOfRange";
    case Errc::ClipTooShort: return "ClipTooShort";
    case Errc::ImageTooNarrow: return "ImageTooNarrow";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BadClassCount: return "BadClassCount";
    case Errc::BadVariant: return "BadVariant";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::CacheMissing: return "CacheMissing";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::SplitEmpty: return "SplitEmpty";
    case Errc::DegenerateClass: return "DegenerateClass";
    case Errc::BadFormat: return "BadFormat";
    case Errc::IoError: return "IoError";
    case Errc::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace respnet

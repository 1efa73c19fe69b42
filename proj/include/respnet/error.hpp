#pragma once

#include <stdexcept>
#include <string>

namespace respnet {

enum class Errc {
  // dataset
  MalformedName,
  MalformedLine,
  NonMonotoneCycle,
  UnknownDiagnosis,
  SplitLeak,
  MissingAnnotation,
  MissingSplitEntry,
  DuplicateKey,
  // dsp / spectrogram
  EmptyClip,
  BandOutOfRange,
  ClipTooShort,
  ImageTooNarrow,
  // nn / models
  ShapeMismatch,
  BadClassCount,
  BadVariant,
  // pipeline
  BatchTooSmall,
  EmptyInput,
  CacheMissing,
  NonFiniteLoss,
  SplitEmpty,
  // metrics
  DegenerateClass,
  // io / cli
  BadFormat,
  IoError,
  UsageError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace respnet

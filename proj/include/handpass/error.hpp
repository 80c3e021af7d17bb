#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace handpass {

/// Base of every domain error raised by the library. `code()` is a stable
/// kebab-case identifier used by the CLI and the service protocol.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define HANDPASS_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(Code, what) {}          \
  }

// codec
HANDPASS_DEFINE_ERROR(MalformedPcapHeader, "malformed-pcap-header");
HANDPASS_DEFINE_ERROR(TruncatedRecord, "truncated-record");
HANDPASS_DEFINE_ERROR(BadCsiPayload, "bad-csi-payload");
HANDPASS_DEFINE_ERROR(IoFailure, "io-failure");

// dsp
HANDPASS_DEFINE_ERROR(OddLength, "odd-length");
HANDPASS_DEFINE_ERROR(ZeroSignal, "zero-signal");
HANDPASS_DEFINE_ERROR(EmptyMatrix, "empty-matrix");
HANDPASS_DEFINE_ERROR(DimensionMismatch, "dimension-mismatch");

// dataset
HANDPASS_DEFINE_ERROR(InsufficientRows, "insufficient-rows");
HANDPASS_DEFINE_ERROR(RaggedRows, "ragged-rows");
HANDPASS_DEFINE_ERROR(InvalidMeta, "invalid-meta");

// learners
HANDPASS_DEFINE_ERROR(DegenerateLabels, "degenerate-labels");
HANDPASS_DEFINE_ERROR(NonFiniteFeature, "non-finite-feature");
HANDPASS_DEFINE_ERROR(TooFewSamples, "too-few-samples");
HANDPASS_DEFINE_ERROR(UnsupportedModel, "unsupported-model");
HANDPASS_DEFINE_ERROR(BadModelDocument, "bad-model-document");

// gatekeeper
HANDPASS_DEFINE_ERROR(TooFewFrames, "too-few-frames");
HANDPASS_DEFINE_ERROR(WindowTooShort, "window-too-short");

#undef HANDPASS_DEFINE_ERROR

}  // namespace handpass

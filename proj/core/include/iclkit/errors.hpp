#pragma once

#include <stdexcept>
#include <string>

namespace iclkit {

enum class ErrorKind {
  contract,               // violated call precondition
  illegal_state,          // operation not valid for the object's current state
  shape,                  // input tensor shape does not match the declared one
  degenerate_similarity,  // cosine undefined (zero-norm vector)
  stream_contract,        // class-label bookkeeping violated (overlap, unseen)
  protocol,               // incremental-split arithmetic does not work out
  ingest,                 // unreadable or malformed external dataset
  divergence,             // training produced a non-finite loss
  config,                 // experiment configuration invalid
  usage,                  // bad CLI / API usage
  io,                     // file read/write failure
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::contract: return "contract";
    case ErrorKind::illegal_state: return "illegal_state";
    case ErrorKind::shape: return "shape";
    case ErrorKind::degenerate_similarity: return "degenerate_similarity";
    case ErrorKind::stream_contract: return "stream_contract";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::ingest: return "ingest";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::config: return "config";
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) raise(kind, message);
}

}  // namespace iclkit

#pragma once
#include <stdexcept>
#include <string>

namespace sndcnn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shape / extent mismatches; messages name the offending shapes
struct DimensionError : Error {
  using Error::Error;
};
// invalid model or run configuration
struct ConfigError : Error {
  using Error::Error;
};
// API misuse (backward before forward, stale activations)
struct StateError : Error {
  using Error::Error;
};
// out-of-range indices or labels
struct IndexError : Error {
  using Error::Error;
};
// batch too small for batch statistics
struct BatchError : Error {
  using Error::Error;
};
// malformed file contents
struct FormatError : Error {
  using Error::Error;
};
// filesystem read/write failures
struct IoError : Error {
  using Error::Error;
};
// worker failure inside the two-thread scoring pipeline
struct PipelineError : Error {
  using Error::Error;
};
// timing workload too small for the clock
struct BenchmarkError : Error {
  using Error::Error;
};
// stats bound check over an empty selection
struct EmptyReportError : Error {
  using Error::Error;
};

} // namespace sndcnn

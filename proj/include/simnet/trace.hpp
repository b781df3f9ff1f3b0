#pragma once

#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simnet/data.hpp"
#include "simnet/decoder.hpp"

namespace simnet {

/// One decoding step of one sample, as written to a trace file.
struct TraceRecord {
  std::string sample;
  std::size_t t = 0;
  std::string token;
  double gamma = 0.0;
  std::vector<double> alpha, alpha_tilde, beta;
};

/// A JSON object per line; floats with 17 significant digits so they read
/// back bit-exact.
std::string format_trace_record(const TraceRecord& r);

std::vector<TraceRecord> trace_records(const std::string& sample, const Generation& gen, const Vocab& vocab);

class TraceError : public std::runtime_error {
 public:
  TraceError(const std::string& what, std::size_t line)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Blank lines are skipped; anything else malformed throws TraceError with
/// the 1-based line number.
std::vector<TraceRecord> read_trace(std::istream& in);

}  // namespace simnet

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eob {

// Error categories. Each category maps onto one of the CLI's stable exit
// codes through exit_code().
enum class ErrorKind {
  config,        // malformed or inconsistent configuration
  dependency,    // an upstream stage has not produced its outputs
  data,          // malformed input data
  out_of_bounds, // point outside a grid
  coverage,      // date range outside a dataset
  alignment,     // paired series on different dates
  metric,        // slice unusable for metric computation
  climatology,   // too few seasons for long-run statistics
  singularity,   // rank-deficient design
  inference,     // too few clusters / degrees of freedom
  integrity,     // hash mismatch (e.g. blinding map vs config)
  io,            // filesystem failure
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 success, 2 config error, 3 dependency error, 4 data error.
int exit_code(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace eob

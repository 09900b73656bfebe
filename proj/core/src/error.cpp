#include "eob/error.hpp"

namespace eob {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::data: return "data";
    case ErrorKind::out_of_bounds: return "out_of_bounds";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::metric: return "metric";
    case ErrorKind::climatology: return "climatology";
    case ErrorKind::singularity: return "singularity";
    case ErrorKind::inference: return "inference";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::integrity:
      return 2;
    case ErrorKind::dependency:
      return 3;
    default:
      return 4;
  }
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace eob

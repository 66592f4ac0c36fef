#include "ppm/error.hpp"

namespace ppm {

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::kConfig:
    case ErrorCategory::kContract:
      return 2;
    case ErrorCategory::kData:
      return 3;
    case ErrorCategory::kNumeric:
      return 4;
  }
  return 1;
}

}  // namespace ppm

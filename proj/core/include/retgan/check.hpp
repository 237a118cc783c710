#pragma once

#include <sstream>
#include <stdexcept>

// Contract checks throw invalid_argument, math-domain violations throw
// domain_error, numeric/IO failures throw runtime_error. Messages are
// stream-composed so shapes and indices can be embedded directly.

#define RETGAN_CHECK(cond, msg)                \
  do {                                         \
    if (!(cond)) {                             \
      std::ostringstream oss_;                 \
      oss_ << msg;                             \
      throw std::invalid_argument(oss_.str()); \
    }                                          \
  } while (0)

#define RETGAN_CHECK_DOMAIN(cond, msg)      \
  do {                                      \
    if (!(cond)) {                          \
      std::ostringstream oss_;              \
      oss_ << msg;                          \
      throw std::domain_error(oss_.str());  \
    }                                       \
  } while (0)

#define RETGAN_CHECK_RUNTIME(cond, msg)     \
  do {                                      \
    if (!(cond)) {                          \
      std::ostringstream oss_;              \
      oss_ << msg;                          \
      throw std::runtime_error(oss_.str()); \
    }                                       \
  } while (0)

// SPDX-License-Identifier: Apache-2.0
#include "tlc/common/hash.hpp"

#include <cstdio>

namespace tlc {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace tlc

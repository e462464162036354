#pragma once

// Canonical JSON text: sorted keys, no whitespace, integers as integers,
// floating-point values with 9 significant digits.

#include <cmath>
#include <cstdio>
#include <string>

#include "fusilade/errors.hpp"
#include "json.hpp"

namespace fusilade::detail {

inline void canonical_dump_into(const nlohmann::json& j, std::string& out) {
  using nlohmann::json;
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order = sorted keys
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        canonical_dump_into(it.value(), out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        canonical_dump_into(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) throw FormatError("canonical JSON cannot represent a non-finite number");
      if (v == 0.0) v = 0.0;  // drop the sign of -0
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

inline std::string canonical_dump(const nlohmann::json& j) {
  std::string out;
  canonical_dump_into(j, out);
  return out;
}

}  // namespace fusilade::detail

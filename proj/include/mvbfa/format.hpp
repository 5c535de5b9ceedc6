#pragma once

#include <string>
#include <string_view>

namespace mvbfa {

// Shortest decimal representation that round-trips to the same double.
std::string formatDouble(double value);

// Parses a full token as a double. Returns false on trailing garbage,
// empty input or out-of-range values.
bool parseDouble(std::string_view token, double& value);

bool parseInt(std::string_view token, long long& value);

// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

}  // namespace mvbfa

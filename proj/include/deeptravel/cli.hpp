#pragma once

// Operator commands: gen-world, gen-data, train, eval, inspect.

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace deeptravel {

/// Bad flags or flag values; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat JSON config with `key=value` overrides applied; values parse as JSON
/// when they can, else as strings.
nlohmann::json load_flat_config(const std::string& path, const std::vector<std::string>& overrides);

/// Seed precedence: config < DEEPTRAVEL_SEED < explicit flag.
uint64_t resolve_seed(const nlohmann::json& config, const std::string& key, std::optional<uint64_t> flag,
                      uint64_t fallback);

/// Returns the process exit code: 0 success, 2 usage, 1 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deeptravel

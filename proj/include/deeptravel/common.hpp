#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deeptravel {

/// Invalid configuration or input handed to a constructor-like operation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t x);

/// Folds an ordered list of stream components into one 64-bit seed.
uint64_t mix_seed(std::initializer_list<uint64_t> parts);

uint64_t fnv1a(std::string_view bytes);

/// Seeded stream. Conversions to doubles/ints are done here rather than with
/// <random> distributions so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}
  static Rng derive(std::initializer_list<uint64_t> parts) { return Rng(mix_seed(parts)); }

  uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n); n must be positive.
  uint64_t below(uint64_t n);
  /// Uniform integer in [lo, hi].
  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo) + 1)); }
  double log_uniform(double lo, double hi);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

/// Civil date stored as days since 1970-01-01.
struct Date {
  int day = 0;

  static std::optional<Date> parse(std::string_view iso);
  static Date from_iso(std::string_view iso);  // throws ConfigError
  std::string iso() const;

  Date plus(int days) const { return Date{day + days}; }
  friend int operator-(Date a, Date b) { return a.day - b.day; }
  friend auto operator<=>(const Date&, const Date&) = default;
};

/// Minutes since midnight rendered as HH:MM.
std::string format_clock(int minutes);
std::optional<int> parse_clock(std::string_view text);

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string casefold(std::string_view s);
/// Trimmed and case-folded; used for every lookup key.
inline std::string normalize_key(std::string_view s) { return casefold(trim(s)); }
bool contains_folded(std::string_view haystack, std::string_view needle);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string hex64(uint64_t v);
/// Price in cents as "1234.50".
std::string format_cents(int64_t cents);

}  // namespace deeptravel

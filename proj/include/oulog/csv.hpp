#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace oulog::csv {

/// RFC-4180 field quoting: fields containing ',', '"', CR or LF are quoted
/// and embedded quotes doubled.
[[nodiscard]] std::string quote(std::string_view field);

/// Shortest round-trip decimal representation ('.' separator, "nan"/"inf" for non-finite).
[[nodiscard]] std::string number(double value);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws InvalidArgument when missing.
  [[nodiscard]] std::size_t column(std::string_view name) const;
};

/// Parses RFC-4180 CSV with a header line.
[[nodiscard]] Table parse(std::string_view text);
[[nodiscard]] Table read_file(const std::string& path);

[[nodiscard]] double to_double(std::string_view field);

/// 64-bit FNV-1a; stable across platforms, used for config and file hashes.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
/// Pass the previous result as `state` to hash a stream in chunks.
[[nodiscard]] std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = kFnvOffset);
/// Hash of a file's bytes; throws std::runtime_error when unreadable.
[[nodiscard]] std::uint64_t fnv1a_file(const std::string& path);
[[nodiscard]] std::string hex(std::uint64_t value);

}  // namespace oulog::csv

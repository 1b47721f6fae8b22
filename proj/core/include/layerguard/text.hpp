#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace layerguard {

// Lowercases and splits on every non-alphanumeric byte. Shared by the tf-idf
// vectorizer and the memory embedding so both see identical tokens.
std::vector<std::string> tokenize(std::string_view text);

// 64-bit FNV-1a. Stable across platforms and runs.
std::uint64_t stable_hash(std::string_view bytes) noexcept;

std::string sha256_hex(std::string_view bytes);

// Parses "prefix] key=value, key=value" records. Text up to and including the
// first ']' is treated as a tag and skipped when present.
std::vector<std::pair<std::string, std::string>> parse_kv_record(std::string_view raw);

// Seconds since the Unix epoch rendered as RFC 3339 UTC ("2026-01-02T03:04:05Z").
std::string format_rfc3339(std::int64_t epoch_seconds);
std::int64_t parse_rfc3339(std::string_view text);

}  // namespace layerguard

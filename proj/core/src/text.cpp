#include "layerguard/text.hpp"

#include <openssl/sha.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>

#include "layerguard/error.hpp"

namespace layerguard {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t stable_hash(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0f]);
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_record(std::string_view raw) {
  std::vector<std::pair<std::string, std::string>> out;
  if (auto tag_end = raw.find(']'); tag_end != std::string_view::npos && raw.find('=') > tag_end) {
    raw.remove_prefix(tag_end + 1);
  }
  while (!raw.empty()) {
    auto comma = raw.find(',');
    std::string_view item = raw.substr(0, comma);
    raw = comma == std::string_view::npos ? std::string_view{} : raw.substr(comma + 1);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = trim(item.substr(0, eq));
    auto value = trim(item.substr(eq + 1));
    if (!key.empty()) out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

std::string format_rfc3339(std::int64_t epoch_seconds) {
  std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::int64_t parse_rfc3339(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  std::string copy(text);
  if (std::sscanf(copy.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6) {
    throw Error(ErrorCode::parse_failure, "not an RFC 3339 timestamp: " + copy);
  }
  using namespace std::chrono;
  const auto days = sys_days{year{y} / month{static_cast<unsigned>(mo)} / day{static_cast<unsigned>(d)}};
  return duration_cast<seconds>(days.time_since_epoch()).count() + h * 3600 + mi * 60 + s;
}

}  // namespace layerguard

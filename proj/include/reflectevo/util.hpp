// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace reflectevo {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of whitespace-separated pieces; the default token approximation.
std::size_t count_whitespace_pieces(std::string_view s);

// ---------------------------------------------------------------------------
// Hashing and seeding
// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view data);

/// Derives a child seed from a base seed and a tag. Stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// Thin wrapper over mt19937_64 that only consumes raw engine output, so
/// sequences are identical on every standard library.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, n), in the order they were drawn.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// JSON / JSONL files
// ---------------------------------------------------------------------------

/// Canonical single-line dump (sorted keys, invalid UTF-8 replaced).
std::string dump_line(const json& j);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

template <typename T>
void write_records(const std::filesystem::path& path, const std::vector<T>& records) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.emplace_back(r);
  write_jsonl(path, lines);
}

template <typename T>
std::vector<T> read_records(const std::filesystem::path& path) {
  std::vector<T> out;
  for (const auto& j : read_jsonl(path)) out.push_back(j.template get<T>());
  return out;
}

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from fn
/// are rethrown on the calling thread after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace reflectevo

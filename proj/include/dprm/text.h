#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dprm {

// Splits on ASCII whitespace; empty chunks are dropped.
std::vector<std::string> split_whitespace(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
bool contains_case_insensitive(std::string_view haystack, std::string_view needle);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// 64-bit FNV-1a. Stable across platforms; used for id hashing and the
// builtin embedding buckets.
std::uint64_t fnv1a64(std::string_view text);

// splitmix64 finalizer, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace dprm

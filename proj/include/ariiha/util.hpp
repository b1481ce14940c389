#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ariiha {

std::string to_lower_ascii(std::string_view s);
std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string_view text, std::string_view from, std::string_view to);
std::vector<std::string> split_lines(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::string iso8601_utc_now();

// std::uniform_int_distribution is implementation-defined; these samplers give
// the same sequence on every platform for a given mt19937_64 state.
std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t n);
std::vector<std::size_t> sample_without_replacement(std::mt19937_64& rng,
                                                    std::size_t population,
                                                    std::size_t k);

}  // namespace ariiha

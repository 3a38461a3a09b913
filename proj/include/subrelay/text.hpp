#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace subrelay {

// A word is a maximal run of non-whitespace characters. This is the unit for
// wc, sigma and output-token counts throughout.
std::size_t word_count(std::string_view text);
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words, std::size_t count);

// words(summary) / words(source). Throws DomainError if either is empty.
double measure_sigma(std::string_view source_text, std::string_view summary_text);

}  // namespace subrelay

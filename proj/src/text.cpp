#include "subrelay/text.hpp"

#include <cctype>

#include "subrelay/errors.hpp"

namespace subrelay {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

template <typename F>
void for_each_word(std::string_view text, F&& f) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) f(text.substr(start, i - start));
    }
}

}  // namespace

std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    for_each_word(text, [&](std::string_view) { ++n; });
    return n;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    for_each_word(text, [&](std::string_view w) { words.emplace_back(w); });
    return words;
}

std::string join_words(const std::vector<std::string>& words, std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count && i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

double measure_sigma(std::string_view source_text, std::string_view summary_text) {
    const auto source_words = word_count(source_text);
    const auto summary_words = word_count(summary_text);
    if (source_words == 0) throw DomainError("measure_sigma: source text has no words");
    if (summary_words == 0) throw DomainError("measure_sigma: summary has no words");
    return static_cast<double>(summary_words) / static_cast<double>(source_words);
}

}  // namespace subrelay

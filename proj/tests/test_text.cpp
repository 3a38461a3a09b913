#include <doctest.h>

#include "subrelay/errors.hpp"
#include "subrelay/text.hpp"

using namespace subrelay;

TEST_CASE("word_count splits on any whitespace run") {
    CHECK(word_count("") == 0);
    CHECK(word_count("   \t\n") == 0);
    CHECK(word_count("hello") == 1);
    CHECK(word_count("  hello \t world\n") == 2);
    CHECK(split_words(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(join_words({"a", "b", "c"}, 2) == "a b");
    CHECK(join_words({"a"}, 5) == "a");
}

TEST_CASE("measure_sigma") {
    std::string thirty, twenty;
    for (int i = 0; i < 30; ++i) thirty += "w" + std::to_string(i) + " ";
    for (int i = 0; i < 20; ++i) twenty += "w" + std::to_string(i) + " ";
    CHECK(measure_sigma(thirty, twenty) == doctest::Approx(2.0 / 3.0));
    CHECK(measure_sigma("same text here", "same text here") == 1.0);
    CHECK(measure_sigma("a b c d", "a b") == 0.5);
    CHECK_THROWS_AS(measure_sigma("", "a"), DomainError);
    CHECK_THROWS_AS(measure_sigma("a b", "  "), DomainError);
}

#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace knreader {

// Maps a surface token to the lemma used for knowledge lookup. Must be pure.
using Lemmatizer = std::function<std::string(std::string_view)>;

// Lowercases, then strips common English inflections (plural -s/-es/-ies,
// -ing and -ed with consonant undoubling) after consulting a table of
// irregular forms. Tokens of three characters or fewer are returned lowercased.
std::string default_lemmatize(std::string_view token);

}  // namespace knreader

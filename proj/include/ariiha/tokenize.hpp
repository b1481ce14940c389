#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ariiha {

using TokenSeq = std::vector<std::string>;

// Lowercases (ASCII), splits on Unicode whitespace, and strips leading and
// trailing ASCII punctuation from each token. '#' and '@' are kept so that
// hashtags and mentions survive intact; interior punctuation is always kept
// ("don't", "v2.1"). Pure function of the input.
TokenSeq tokenize(std::string_view text);

}  // namespace ariiha

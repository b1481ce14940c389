#include "ariiha/tokenize.hpp"

#include <cctype>
#include <utility>
#include <vector>

#include "ariiha/utf8.hpp"

namespace ariiha {

namespace {

bool strippable_punct(char32_t cp) {
    if (cp >= 0x80 || cp == U'#' || cp == U'@') return false;
    return std::ispunct(static_cast<int>(cp)) != 0;
}

std::string fold_token(std::string_view raw) {
    // Code point boundaries within the raw token.
    std::vector<std::pair<std::size_t, std::size_t>> cps;  // (byte offset, byte len)
    std::size_t pos = 0;
    while (pos < raw.size()) {
        auto d = utf8::decode(raw, pos);
        cps.emplace_back(pos, d.len);
        pos += d.len;
    }
    std::size_t begin = 0, end = cps.size();
    while (begin < end && strippable_punct(utf8::decode(raw, cps[begin].first).cp)) ++begin;
    while (end > begin && strippable_punct(utf8::decode(raw, cps[end - 1].first).cp)) --end;
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        std::string_view bytes = raw.substr(cps[i].first, cps[i].second);
        if (bytes.size() == 1) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(bytes[0])));
        } else {
            out.append(bytes);
        }
    }
    return out;
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
    TokenSeq tokens;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto d = utf8::decode(text, pos);
        if (utf8::is_space(d.cp)) {
            pos += d.len;
            continue;
        }
        std::size_t start = pos;
        while (pos < text.size()) {
            auto e = utf8::decode(text, pos);
            if (utf8::is_space(e.cp)) break;
            pos += e.len;
        }
        auto token = fold_token(text.substr(start, pos - start));
        if (!token.empty()) tokens.push_back(std::move(token));
    }
    return tokens;
}

}  // namespace ariiha

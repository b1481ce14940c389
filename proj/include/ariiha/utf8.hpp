#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace ariiha::utf8 {

struct Decoded {
    char32_t cp;
    std::size_t len;  // bytes consumed, >= 1
};

// Decodes the code point starting at `pos`. Invalid sequences are consumed one
// byte at a time and surfaced as that byte's value, so iteration always
// terminates and never throws.
inline Decoded decode(std::string_view s, std::size_t pos) {
    unsigned char c0 = static_cast<unsigned char>(s[pos]);
    if (c0 < 0x80) return {c0, 1};
    auto cont = [&](std::size_t off) -> int {
        if (pos + off >= s.size()) return -1;
        unsigned char c = static_cast<unsigned char>(s[pos + off]);
        return (c & 0xC0) == 0x80 ? (c & 0x3F) : -1;
    };
    if ((c0 & 0xE0) == 0xC0) {
        int c1 = cont(1);
        if (c1 >= 0) return {static_cast<char32_t>(((c0 & 0x1F) << 6) | c1), 2};
    } else if ((c0 & 0xF0) == 0xE0) {
        int c1 = cont(1), c2 = cont(2);
        if (c1 >= 0 && c2 >= 0)
            return {static_cast<char32_t>(((c0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
    } else if ((c0 & 0xF8) == 0xF0) {
        int c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 >= 0 && c2 >= 0 && c3 >= 0)
            return {static_cast<char32_t>(((c0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
    }
    return {c0, 1};
}

inline bool is_space(char32_t cp) {
    switch (cp) {
        case U'\t': case U'\n': case U'\v': case U'\f': case U'\r': case U' ':
        case 0x0085:  // NEL
        case 0x00A0:  // NBSP
        case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace ariiha::utf8

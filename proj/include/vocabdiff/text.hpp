#pragma once

#include <string>
#include <string_view>

namespace vocabdiff::text {

// UTF-8 <-> UTF-32. Invalid sequences raise InputError.
std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);

bool is_letter(char32_t c);
char32_t to_lower(char32_t c);

// Lowercase, canonical decomposition (NFD), combining marks removed, ß -> ss.
std::u32string fold_for_comparison(std::string_view utf8);

std::string lower_first(std::string_view utf8);
std::string trim(std::string_view s);

}  // namespace vocabdiff::text

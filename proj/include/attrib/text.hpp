#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace attrib {

// Decodes the UTF-8 code point starting at data[pos]; advances pos past it.
// Malformed bytes decode as U+FFFD one byte at a time.
char32_t utf8_next(std::string_view data, std::size_t& pos);

void utf8_append(std::string& out, char32_t cp);

// Splits a string into code points (each as its own UTF-8 string).
std::vector<std::string> utf8_chars(std::string_view text);

std::size_t utf8_length(std::string_view text);

// True for characters the pre-tokenizer treats as standalone tokens:
// ASCII punctuation plus the Bangla danda/double danda.
bool is_punct_token(char32_t cp);

bool is_space(char32_t cp);

// Whitespace-and-punctuation pre-tokenizer: tokens are maximal runs of
// non-space, non-punctuation characters; punctuation characters come out as
// single-character tokens. Shared by the word tokenizer and by word counting
// for document chunking, so a "750 word" sample means the same thing in
// every tokenizer mode.
std::vector<std::string> pre_tokenize(std::string_view text);

// Collapses all whitespace runs to single spaces and trims the ends. Input
// is expected to be composed (NFC) UTF-8 already; byte content is otherwise
// preserved.
std::string normalize_text(std::string_view text);

}  // namespace attrib

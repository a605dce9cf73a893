#include "attrib/text.hpp"

namespace attrib {

char32_t utf8_next(std::string_view data, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(data[i]); };
  const unsigned char b0 = byte(pos);
  std::size_t len;
  char32_t cp;
  if (b0 < 0x80) {
    len = 1;
    cp = b0;
  } else if ((b0 >> 5) == 0x6) {
    len = 2;
    cp = b0 & 0x1f;
  } else if ((b0 >> 4) == 0xe) {
    len = 3;
    cp = b0 & 0x0f;
  } else if ((b0 >> 3) == 0x1e) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + len > data.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (std::size_t i = 1; i < len; ++i) {
    if ((byte(pos + i) & 0xc0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (byte(pos + i) & 0x3f);
  }
  pos += len;
  return cp;
}

void utf8_append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    utf8_next(text, pos);
    out.emplace_back(text.substr(start, pos - start));
  }
  return out;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0, pos = 0;
  while (pos < text.size()) {
    utf8_next(text, pos);
    ++n;
  }
  return n;
}

bool is_punct_token(char32_t cp) {
  if (cp < 0x80) {
    const char c = static_cast<char>(cp);
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
  }
  return cp == 0x0964 || cp == 0x0965;  // danda, double danda
}

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
         cp == 0x00A0;
}

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = utf8_next(text, pos);
    if (is_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (is_punct_token(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
      tokens.emplace_back(text.substr(start, pos - start));
    } else {
      current.append(text.substr(start, pos - start));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = utf8_next(text, pos);
    if (is_space(cp)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.append(text.substr(start, pos - start));
    }
  }
  return out;
}

}  // namespace attrib

#include "jobembed/lang.hpp"

#include <stdexcept>

namespace jobembed {

namespace {

[[noreturn]] void bad_utf8(std::size_t offset) {
  throw std::runtime_error("invalid UTF-8 at byte " + std::to_string(offset));
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char b0 = static_cast<unsigned char>(text[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      bad_utf8(i);
    }
    if (i + len > text.size()) bad_utf8(i);
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) bad_utf8(i + k);
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong encodings and surrogates.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      bad_utf8(i);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) encode_utf8(cp, out);
  return out;
}

namespace {

struct ScriptCounts {
  std::size_t l1 = 0;
  std::size_t l2 = 0;
};

ScriptCounts count_scripts(std::string_view text, const ScriptConfig& scripts) {
  ScriptCounts c;
  for (char32_t cp : decode_utf8(text)) {
    if (scripts.is_l1(cp)) {
      ++c.l1;
    } else if (ScriptConfig::is_l2(cp)) {
      ++c.l2;
    }
  }
  return c;
}

}  // namespace

LangTag tag_language(std::string_view text, const ScriptConfig& scripts) {
  const ScriptCounts c = count_scripts(text, scripts);
  if (c.l1 == 0 && c.l2 == 0) {
    throw std::invalid_argument("untaggable: no letters of either configured script");
  }
  if (c.l1 > 0 && c.l2 > 0) return LangTag::CodeSwitched;
  return c.l1 > 0 ? LangTag::L1 : LangTag::L2;
}

LangTag dominant_language(std::string_view text, const ScriptConfig& scripts) {
  const ScriptCounts c = count_scripts(text, scripts);
  if (c.l1 == 0 && c.l2 == 0) {
    throw std::invalid_argument("untaggable: no letters of either configured script");
  }
  return c.l1 >= c.l2 ? LangTag::L1 : LangTag::L2;
}

std::string_view to_string(LangTag tag) {
  switch (tag) {
    case LangTag::L1: return "l1";
    case LangTag::L2: return "l2";
    case LangTag::CodeSwitched: return "cs";
  }
  return "l1";
}

std::optional<LangTag> lang_from_string(std::string_view s) {
  if (s == "l1") return LangTag::L1;
  if (s == "l2") return LangTag::L2;
  if (s == "cs") return LangTag::CodeSwitched;
  return std::nullopt;
}

}  // namespace jobembed

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jobembed {

enum class LangTag { L1, L2, CodeSwitched };

// Unicode script ranges for the two configured languages. L1 defaults to the
// Thai block; L2 is fixed to basic Latin letters.
struct ScriptConfig {
  char32_t l1_begin = 0x0E00;
  char32_t l1_end = 0x0E7F;  // inclusive

  bool is_l1(char32_t cp) const { return cp >= l1_begin && cp <= l1_end; }
  static bool is_l2(char32_t cp) {
    return (cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z');
  }
};

// Strict UTF-8 decoding; throws std::runtime_error on malformed input.
std::vector<char32_t> decode_utf8(std::string_view text);
void encode_utf8(char32_t cp, std::string& out);
std::string encode_utf8(const std::vector<char32_t>& cps);

// L1 if only script-1 letters occur, L2 symmetric, CodeSwitched if both.
// Digits, punctuation and other scripts are ignored. Throws
// std::invalid_argument("untaggable") when no letter of either script occurs.
LangTag tag_language(std::string_view text, const ScriptConfig& scripts = {});

// Like tag_language but folds code-switched text onto the script with the
// majority of letters; ties go to L1. Never returns CodeSwitched.
LangTag dominant_language(std::string_view text, const ScriptConfig& scripts = {});

std::string_view to_string(LangTag tag);                    // "l1" | "l2" | "cs"
std::optional<LangTag> lang_from_string(std::string_view);  // inverse of to_string

}  // namespace jobembed

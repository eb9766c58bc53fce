#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace iclft::text {

inline constexpr std::string_view kSpeechOpen = "<Speech>";
inline constexpr std::string_view kSpeechClose = "</Speech>";

bool is_word_char(char c) noexcept;
std::string to_lower(std::string_view s);

/// Lowercased word tokens; punctuation separates tokens and is dropped.
/// Underscores and digits are word characters.
std::vector<std::string> words(std::string_view s);

/// Prompt tokenization: lowercased words plus one token per punctuation
/// character. The literal speech markers survive as single tokens.
std::vector<std::string> prompt_tokens(std::string_view s);

/// Strips leading and trailing non-word characters.
std::string_view trim_punct(std::string_view s) noexcept;
std::string_view trim_space(std::string_view s) noexcept;

std::vector<std::string> split(std::string_view s, std::string_view delims);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Removes literal speech markers so user text can never open or close a span.
std::string strip_speech_markers(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace iclft::text

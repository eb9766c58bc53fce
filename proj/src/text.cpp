#include "iclft/text.hpp"

#include <cctype>
#include <cstdio>

namespace iclft::text {

bool is_word_char(char c) noexcept {
  const auto u = static_cast<unsigned char>(c);
  // Bytes of multi-byte UTF-8 sequences count as word characters.
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word_char(s[j])) ++j;
    out.push_back(to_lower(s.substr(i, j - i)));
    i = j;
  }
  return out;
}

std::vector<std::string> prompt_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (s.substr(i, kSpeechOpen.size()) == kSpeechOpen) {
      out.emplace_back(kSpeechOpen);
      i += kSpeechOpen.size();
    } else if (s.substr(i, kSpeechClose.size()) == kSpeechClose) {
      out.emplace_back(kSpeechClose);
      i += kSpeechClose.size();
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < s.size() && is_word_char(s[j])) ++j;
      out.push_back(to_lower(s.substr(i, j - i)));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

std::string_view trim_punct(std::string_view s) noexcept {
  while (!s.empty() && !is_word_char(s.front())) s.remove_prefix(1);
  while (!s.empty() && !is_word_char(s.back())) s.remove_suffix(1);
  return s;
}

std::string_view trim_space(std::string_view s) noexcept {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, std::string_view delims) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || delims.find(s[i]) != std::string_view::npos) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string strip_speech_markers(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.substr(i, kSpeechOpen.size()) == kSpeechOpen) {
      out += ' ';
      i += kSpeechOpen.size();
    } else if (s.substr(i, kSpeechClose.size()) == kSpeechClose) {
      out += ' ';
      i += kSpeechClose.size();
    } else {
      out += s[i++];
    }
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) noexcept {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace iclft::text

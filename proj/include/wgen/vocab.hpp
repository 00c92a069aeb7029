#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wgen {

using Token = std::int32_t;
using Tokens = std::vector<Token>;

inline constexpr Token kPad = 0;
inline constexpr Token kBos = 1;
inline constexpr Token kEos = 2;
inline constexpr Token kSep = 3;
inline constexpr Token kFirstSymbol = 4;
inline constexpr std::size_t kNumSpecials = 4;

// Token inventory: the four reserved ids followed by printable symbols named
// a, b, ..., z, aa, ab, ...
class Vocab {
 public:
  explicit Vocab(std::size_t size);

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t symbol_count() const noexcept { return names_.size() - kNumSpecials; }
  Token symbol(std::size_t index) const { return kFirstSymbol + static_cast<Token>(index); }

  const std::string& name(Token id) const;
  Token id(std::string_view name) const;
  bool contains(Token id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < names_.size();
  }

  // Space-separated symbol names; the separator prints as "||".
  std::string render(std::span<const Token> tokens) const;
  Tokens parse(std::string_view text) const;

  // One "id<TAB>name" line per token.
  void write_manifest(const std::filesystem::path& path) const;
  static Vocab read_manifest(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Token> ids_;
};

inline bool is_symbol(Token t) noexcept { return t >= kFirstSymbol; }
inline bool is_special(Token t) noexcept { return t >= 0 && t < kFirstSymbol; }

// Name for symbol index i: a..z, then aa, ab, ...
std::string symbol_name(std::size_t index);

}  // namespace wgen

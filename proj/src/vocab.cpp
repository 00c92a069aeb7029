#include "wgen/vocab.hpp"

#include <fstream>
#include <sstream>

#include "wgen/error.hpp"

namespace wgen {

std::string symbol_name(std::size_t index) {
  std::string s;
  std::size_t n = index + 1;
  while (n > 0) {
    --n;
    s.insert(s.begin(), static_cast<char>('a' + n % 26));
    n /= 26;
  }
  return s;
}

Vocab::Vocab(std::size_t size) {
  if (size <= kNumSpecials)
    throw ConfigError("vocabulary needs at least one symbol beyond the 4 reserved ids");
  names_ = {"<pad>", "<bos>", "<eos>", "||"};
  for (std::size_t i = 0; i + kNumSpecials < size; ++i) names_.push_back(symbol_name(i));
  for (std::size_t i = 0; i < names_.size(); ++i) ids_.emplace(names_[i], static_cast<Token>(i));
}

const std::string& Vocab::name(Token id) const {
  if (!contains(id)) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  return names_[static_cast<std::size_t>(id)];
}

Token Vocab::id(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) throw IndexError("unknown token name '" + std::string(name) + "'");
  return it->second;
}

std::string Vocab::render(std::span<const Token> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += name(tokens[i]);
  }
  return out;
}

Tokens Vocab::parse(std::string_view text) const {
  Tokens out;
  std::istringstream is{std::string(text)};
  std::string word;
  while (is >> word) out.push_back(id(word));
  return out;
}

void Vocab::write_manifest(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write vocab manifest " + path.string());
  for (std::size_t i = 0; i < names_.size(); ++i) os << i << '\t' << names_[i] << '\n';
  if (!os) throw IoError("failed writing vocab manifest " + path.string());
}

Vocab Vocab::read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vocab manifest " + path.string());
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> names;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || std::stoul(line.substr(0, tab)) != count)
      throw ParseError(path.string() + ":" + std::to_string(count + 1) +
                       ": expected '<id>\\t<name>' with consecutive ids");
    names.push_back(line.substr(tab + 1));
    ++count;
  }
  Vocab v(count);
  if (v.names_ != names)
    throw ParseError(path.string() + ": manifest names do not match the standard inventory");
  return v;
}

}  // namespace wgen

#pragma once

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gpo/errors.hpp"
#include "gpo/rng.hpp"

namespace gpo {

using Json = nlohmann::json;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("file not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

namespace detail {

// Parser for the TOML subset used by config files: [table] / [a.b] headers,
// `key = value` lines, strings, integers, floats, booleans and (nested,
// possibly multi-line) arrays. Inline tables and dates are not supported.
class TomlParser {
 public:
  explicit TomlParser(std::string text) : text_(std::move(text)) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    while (true) {
      skip_blank_and_comments();
      if (pos_ >= text_.size()) break;
      if (text_[pos_] == '[') {
        ++pos_;
        table = &root;
        std::string key;
        while (true) {
          skip_inline_space();
          key = parse_key();
          skip_inline_space();
          Json& next = (*table)[key];
          if (next.is_null()) next = Json::object();
          if (!next.is_object()) fail("'" + key + "' is not a table");
          table = &next;
          if (peek() == '.') {
            ++pos_;
            continue;
          }
          break;
        }
        expect(']');
        finish_line();
        continue;
      }
      const std::string key = parse_key();
      skip_inline_space();
      expect('=');
      skip_inline_space();
      if (table->contains(key)) fail("duplicate key '" + key + "'");
      (*table)[key] = parse_value();
      finish_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) line += text_[i] == '\n';
    throw ConfigError("TOML line " + std::to_string(line) + ": " + what);
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char ch) {
    if (peek() != ch) fail(std::string("expected '") + ch + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }
  }

  void skip_blank_and_comments() {
    while (pos_ < text_.size()) {
      const char ch = text_[pos_];
      if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        ++pos_;
      } else if (ch == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }

  void finish_line() {
    skip_inline_space();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (pos_ < text_.size() && text_[pos_] != '\n') fail("unexpected trailing characters");
  }

  std::string parse_key() {
    if (peek() == '"') return parse_string();
    const std::size_t start = pos_;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return text_.substr(start, pos_ - start);
  }

  std::string parse_string() {
    const char quote = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= text_.size() || text_[pos_] == '\n') fail("unterminated string");
      const char ch = text_[pos_++];
      if (ch == quote) break;
      if (ch == '\\' && quote == '"') {
        const char esc = text_[pos_++];
        switch (esc) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape \\") + esc);
        }
      } else {
        out += ch;
      }
    }
    return out;
  }

  Json parse_value() {
    const char ch = peek();
    if (ch == '"' || ch == '\'') return parse_string();
    if (ch == '[') {
      ++pos_;
      Json arr = Json::array();
      while (true) {
        skip_blank_and_comments();
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        arr.push_back(parse_value());
        skip_blank_and_comments();
        if (peek() == ',') {
          ++pos_;
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           text_[pos_] != '\n' && text_[pos_] != '#' && text_[pos_] != ' ' &&
           text_[pos_] != '\t' && text_[pos_] != '\r') {
      ++pos_;
    }
    std::string token = text_.substr(start, pos_ - start);
    if (token.empty()) fail("expected a value");
    if (token == "true") return true;
    if (token == "false") return false;
    if (token == "inf" || token == "+inf") return std::numeric_limits<double>::infinity();
    if (token == "-inf") return -std::numeric_limits<double>::infinity();
    std::erase(token, '_');
    const bool is_float = token.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(token, &used);
        if (used == token.size()) return v;
      } else {
        const long long v = std::stoll(token, &used);
        if (used == token.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + token + "'");
  }

  std::string text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Json parse_toml(const std::string& text) { return detail::TomlParser(text).parse(); }

/// Reads a config file: `.json` as JSON, anything else as TOML.
inline Json load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  if (path.extension() == ".json") {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_toml(text);
}

/// Sorted-key compact JSON rendering: the bytes the config hash is taken over.
inline std::string canonical_json(const Json& config) { return config.dump(); }

/// 16-hex-digit FNV-1a digest of the canonical rendering.
inline std::string config_hash(const Json& config) {
  const std::uint64_t h = detail::fnv1a64(canonical_json(config));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gpo

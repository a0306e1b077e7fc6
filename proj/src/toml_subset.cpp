#include "mfmh/toml_subset.hpp"

#include "mfmh/errors.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace mfmh {

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array_table = s_.compare(pos_, 2, "[[") == 0;
        pos_ += array_table ? 2 : 1;
        auto path = key_path();
        skip_inline_ws();
        if (array_table) expect("]]");
        else expect("]");
        table = open_table(root, path, array_table);
      } else {
        auto path = key_path();
        skip_inline_ws();
        expect("=");
        skip_inline_ws();
        nlohmann::json value = parse_value();
        nlohmann::json* target = table;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
          auto& next = (*target)[path[k]];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) fail("key '" + path[k] + "' is not a table");
          target = &next;
        }
        if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = std::move(value);
      }
      skip_inline_ws();
      skip_comment();
      if (!eof() && peek() != '\n' && peek() != '\r') fail("unexpected text after value");
    }
    return root;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  int line() const {
    int n = 1;
    for (std::size_t k = 0; k < pos_ && k < s_.size(); ++k) n += s_[k] == '\n';
    return n;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("", "TOML line " + std::to_string(line()) + ": " + what);
  }

  void expect(const char* tok) {
    const std::string t(tok);
    if (s_.compare(pos_, t.size(), t) != 0) fail("expected '" + t + "'");
    pos_ += t.size();
  }

  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (!eof() && peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') ++pos_;
      else if (c == '#') skip_comment();
      else break;
    }
  }

  std::string parse_key() {
    if (eof()) fail("expected a key");
    if (peek() == '"' || peek() == '\'') return parse_string();
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path;
    skip_inline_ws();
    path.push_back(parse_key());
    while (true) {
      skip_inline_ws();
      if (eof() || peek() != '.') break;
      ++pos_;
      skip_inline_ws();
      path.push_back(parse_key());
    }
    return path;
  }

  nlohmann::json* open_table(nlohmann::json& root, const std::vector<std::string>& path, bool array) {
    nlohmann::json* t = &root;
    for (std::size_t k = 0; k < path.size(); ++k) {
      auto& next = (*t)[path[k]];
      const bool last = k + 1 == path.size();
      if (last && array) {
        if (next.is_null()) next = nlohmann::json::array();
        if (!next.is_array()) fail("'" + path[k] + "' is not an array of tables");
        next.push_back(nlohmann::json::object());
        return &next.back();
      }
      if (next.is_null()) next = nlohmann::json::object();
      if (next.is_array() && !next.empty() && next.back().is_object()) {
        t = &next.back();
        continue;
      }
      if (!next.is_object()) fail("'" + path[k] + "' is not a table");
      t = &next;
    }
    return t;
  }

  std::string parse_string() {
    const char q = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == q) break;
      if (c == '\\' && q == '"') {
        if (eof()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '\\': out += '\\'; break;
          case '"': out += '"'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  nlohmann::json parse_value() {
    if (eof()) fail("expected a value");
    const char c = peek();
    if (c == '"' || c == '\'') return parse_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  nlohmann::json parse_number() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                      peek() == '-' || peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok;
    for (char ch : s_.substr(start, pos_ - start))
      if (ch != '_') tok += ch;
    if (tok.empty()) fail("expected a value");
    std::string body = tok;
    if (body[0] == '+' || body[0] == '-') body = body.substr(1);
    const double sign = tok[0] == '-' ? -1.0 : 1.0;
    if (body == "inf") return sign * std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(tok, &used);
        if (used != tok.size()) fail("malformed number '" + tok + "'");
        return v;
      }
      const long long v = std::stoll(tok, &used, 10);
      if (used != tok.size()) fail("malformed number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("malformed value '" + tok + "'");
    }
  }

  nlohmann::json parse_array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_comments_newlines();
      if (!eof() && peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws_comments_newlines();
      if (eof() || peek() != ']') fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json parse_inline_table() {
    ++pos_;
    nlohmann::json t = nlohmann::json::object();
    skip_inline_ws();
    if (!eof() && peek() == '}') {
      ++pos_;
      return t;
    }
    while (true) {
      auto path = key_path();
      skip_inline_ws();
      expect("=");
      skip_inline_ws();
      nlohmann::json* target = &t;
      for (std::size_t k = 0; k + 1 < path.size(); ++k) target = &(*target)[path[k]];
      (*target)[path.back()] = parse_value();
      skip_inline_ws();
      if (!eof() && peek() == ',') {
        ++pos_;
        skip_inline_ws();
        continue;
      }
      expect("}");
      return t;
    }
  }
};

}  // namespace

nlohmann::json parse_toml(const std::string& text) { return Parser(text).parse(); }

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("", std::string("cannot parse JSON config: ") + e.what());
    }
  }
  return parse_toml(ss.str());
}

}  // namespace mfmh

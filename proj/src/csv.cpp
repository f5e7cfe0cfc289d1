#include "peerfb/csv.hpp"

#include <fmt/format.h>

#include "peerfb/core.hpp"

namespace peerfb::csv {

std::optional<Record> Reader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    Record rec;
    rec.line = line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    std::size_t i = 0;
    while (true) {
      if (i == line.size()) {
        if (!quoted) break;
        // Quoted field continues on the next physical line.
        if (!std::getline(in_, line)) {
          throw Error(Errc::invalid_argument,
                      fmt::format("line {}: unterminated quoted field", rec.line));
        }
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        field += '\n';
        i = 0;
        continue;
      }
      const char c = line[i++];
      if (quoted) {
        if (c == '"') {
          if (i < line.size() && line[i] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"') {
        if (!field.empty() || was_quoted) {
          throw Error(Errc::invalid_argument, fmt::format("line {}: stray quote", rec.line));
        }
        quoted = true;
        was_quoted = true;
      } else if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else {
        if (was_quoted) {
          throw Error(Errc::invalid_argument,
                      fmt::format("line {}: text after closing quote", rec.line));
        }
        field += c;
      }
    }
    rec.fields.push_back(std::move(field));
    return rec;
  }
  return std::nullopt;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += escape(fields[i]);
  }
  return out;
}

}  // namespace peerfb::csv

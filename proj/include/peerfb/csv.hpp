#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peerfb::csv {

// One parsed record and the 1-based line it started on.
struct Record {
  std::vector<std::string> fields;
  int line = 0;
};

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
// newlines. Skips blank lines.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::optional<Record> next();

 private:
  std::istream& in_;
  int line_ = 0;
};

std::string escape(std::string_view field);
std::string join(const std::vector<std::string>& fields);

}  // namespace peerfb::csv

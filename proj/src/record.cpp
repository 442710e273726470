#include "roughmetric/record.hpp"

#include <cmath>
#include <cstdio>

namespace roughmetric {

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Record::Record(std::string kind) { fields_.emplace_back("record", std::move(kind)); }

Record& Record::add(const std::string& key, double value) {
  fields_.emplace_back(key, format_real(value));
  return *this;
}

Record& Record::add(const std::string& key, int value) {
  fields_.emplace_back(key, std::to_string(value));
  return *this;
}

Record& Record::add(const std::string& key, std::size_t value) {
  fields_.emplace_back(key, std::to_string(value));
  return *this;
}

Record& Record::add(const std::string& key, bool value) {
  fields_.emplace_back(key, value ? "true" : "false");
  return *this;
}

Record& Record::add(const std::string& key, const std::string& value) {
  fields_.emplace_back(key, value);
  return *this;
}

std::string Record::line() const {
  std::string out;
  for (const auto& [k, v] : fields_) {
    if (!out.empty()) out += ' ';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

}  // namespace roughmetric

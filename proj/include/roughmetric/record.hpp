#pragma once

// Structured text records: one record per line, space-separated key=value
// pairs. Reals are written with %.17g so a record round-trips exactly.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace roughmetric {

class Record {
 public:
  explicit Record(std::string kind);

  Record& add(const std::string& key, double value);
  Record& add(const std::string& key, int value);
  Record& add(const std::string& key, std::size_t value);
  Record& add(const std::string& key, bool value);
  Record& add(const std::string& key, const std::string& value);
  Record& add(const std::string& key, const char* value) { return add(key, std::string(value)); }

  std::string line() const;

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

std::string format_real(double value);

}  // namespace roughmetric

#pragma once

// Minimal CSV assembly: header row, comma delimiter, '\n' line endings, and
// 17 significant digits per number so binary64 values round-trip exactly.
// Tables are built in memory and written in one shot, which keeps reruns
// byte-identical.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace emt {

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  // Numeric row; size must match the header.
  void add_row(const std::vector<double>& values);
  // Mixed row for labels or flags; size must match the header.
  void add_text_row(const std::vector<std::string>& cells);

  Eigen::Index rows() const { return rows_; }
  // Header plus all rows.
  std::string str() const;

 private:
  std::vector<std::string> columns_;
  std::string body_;
  Eigen::Index rows_ = 0;
};

// Writes text to path byte-for-byte (binary stream); creates parent
// directories. Throws ConfigError when the file cannot be written.
void write_file(const std::string& path, const std::string& text);

}  // namespace emt

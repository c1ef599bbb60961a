#include "emtime/csv.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "emtime/numeric.hpp"

namespace emt {

CsvTable::CsvTable(std::vector<std::string> columns)
    : columns_(std::move(columns)) {
  if (columns_.empty())
    throw std::invalid_argument("csv table: need at least one column");
}

void CsvTable::add_row(const std::vector<double>& values) {
  if (values.size() != columns_.size())
    throw std::invalid_argument("csv table: row width does not match header");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) body_ += ',';
    body_ += format_full(values[i]);
  }
  body_ += '\n';
  ++rows_;
}

void CsvTable::add_text_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_.size())
    throw std::invalid_argument("csv table: row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) body_ += ',';
    body_ += cells[i];
  }
  body_ += '\n';
  ++rows_;
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i > 0) out += ',';
    out += columns_[i];
  }
  out += '\n';
  out += body_;
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec)
      throw ConfigError("cannot create directory '" +
                        p.parent_path().string() + "': " + ec.message());
  }
  std::ofstream file(p, std::ios::binary | std::ios::trunc);
  if (!file) throw ConfigError("cannot write file '" + path + "'");
  file.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!file) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace emt

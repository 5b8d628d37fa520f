#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace jobembed {

// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);

// Writes content to a temp file in the target directory, then renames.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// FNV-1a over the file bytes, hex encoded; used for input checksums in run
// manifests.
std::string file_checksum(const std::filesystem::path& path);

// Minimal CSV assembly with RFC-style quoting. Rows are buffered and the
// whole report is written atomically.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::vector<std::string> header);

  void add_row(const std::vector<std::string>& cells);
  const std::string& content() const { return buf_; }
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t width_;
  std::string buf_;
};

}  // namespace jobembed

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dquag/table.hpp"

namespace testing {

inline dquag::Schema make_schema(std::vector<std::pair<std::string, dquag::ColumnKind>> cols) {
  std::vector<dquag::Column> out;
  for (auto& [name, kind] : cols) out.push_back({name, kind, {}});
  return dquag::Schema(std::move(out));
}

inline dquag::RawTable table_from_csv(const dquag::Schema& schema, const std::string& text) {
  return dquag::parse_csv_text(text, schema);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dquag-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace casbench {

// Append-only JSON-lines file. Line 1 is {"kind":"header",...}; every further
// line is one committed cell {"kind":"cell","key":...,...}. A torn final line
// left by a crash is dropped when the store is reopened.
class ResultStore {
 public:
  struct Contents {
    nlohmann::json header;
    std::vector<nlohmann::json> cells;
  };

  // Creates the file with the header, or reopens it for extension. Reopening
  // with a header that differs from the stored one is a ConfigError.
  static ResultStore open(const std::filesystem::path& path, const nlohmann::json& header);
  static Contents read(const std::filesystem::path& path);

  bool contains(const std::string& key) const;
  std::size_t size() const;
  // Writes one cell line and flushes; thread-safe. Cells must carry a
  // unique "key" field.
  void append(const nlohmann::json& cell);

  const std::filesystem::path& path() const noexcept { return path_; }

  ResultStore(ResultStore&& other) noexcept;
  ResultStore& operator=(ResultStore&&) = delete;

 private:
  ResultStore(std::filesystem::path path, std::set<std::string> keys);

  std::filesystem::path path_;
  std::set<std::string> keys_;
  std::ofstream out_;
  mutable std::mutex mu_;
};

}  // namespace casbench

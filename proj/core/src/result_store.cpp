#include "casbench/result_store.hpp"

#include "casbench/error.hpp"

namespace casbench {

namespace {

using nlohmann::json;

// Reads complete lines; returns the byte length of the valid prefix.
std::size_t read_lines(const std::filesystem::path& path, std::vector<std::string>& lines) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("results", 0, "cannot open result store " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  std::size_t valid = 0;
  while (start < data.size()) {
    const auto nl = data.find('\n', start);
    if (nl == std::string::npos) break;  // torn tail
    lines.push_back(data.substr(start, nl - start));
    start = nl + 1;
    valid = start;
  }
  return valid;
}

json parse_line(const std::string& line, std::size_t line_no, const std::filesystem::path& path) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError("results", static_cast<int>(line_no),
                      "malformed record in " + path.string() + ": " + e.what());
  }
}

}  // namespace

ResultStore::ResultStore(std::filesystem::path path, std::set<std::string> keys)
    : path_(std::move(path)), keys_(std::move(keys)) {
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw ConfigError("results", 0, "cannot write result store " + path_.string());
}

ResultStore::ResultStore(ResultStore&& other) noexcept
    : path_(std::move(other.path_)), keys_(std::move(other.keys_)), out_(std::move(other.out_)) {}

ResultStore ResultStore::open(const std::filesystem::path& path, const json& header) {
  json head = header;
  head["kind"] = "header";
  if (!std::filesystem::exists(path) || std::filesystem::file_size(path) == 0) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << head.dump() << '\n';
    out.flush();
    if (!out) throw ConfigError("results", 0, "cannot write result store " + path.string());
    return ResultStore(path, {});
  }

  std::vector<std::string> lines;
  const std::size_t valid = read_lines(path, lines);
  if (valid < std::filesystem::file_size(path)) std::filesystem::resize_file(path, valid);
  if (lines.empty()) {
    throw ConfigError("results", 1, "result store " + path.string() + " has no header");
  }
  const json stored = parse_line(lines.front(), 1, path);
  if (stored != head) {
    throw ConfigError("results", 1,
                      "result store " + path.string() +
                          " was written by a different sweep configuration; use a new output path");
  }
  std::set<std::string> keys;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    keys.insert(parse_line(lines[i], i + 1, path).at("key").get<std::string>());
  }
  return ResultStore(path, std::move(keys));
}

ResultStore::Contents ResultStore::read(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  read_lines(path, lines);
  if (lines.empty()) throw ConfigError("results", 1, "result store " + path.string() + " is empty");
  Contents c;
  c.header = parse_line(lines.front(), 1, path);
  if (c.header.value("kind", "") != "header") {
    throw ConfigError("results", 1, "first record of " + path.string() + " is not a header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) c.cells.push_back(parse_line(lines[i], i + 1, path));
  return c;
}

bool ResultStore::contains(const std::string& key) const {
  std::lock_guard lock(mu_);
  return keys_.contains(key);
}

std::size_t ResultStore::size() const {
  std::lock_guard lock(mu_);
  return keys_.size();
}

void ResultStore::append(const json& cell) {
  const std::string key = cell.at("key").get<std::string>();
  std::string line = cell.dump();
  line.push_back('\n');
  std::lock_guard lock(mu_);
  if (!keys_.insert(key).second) throw DomainError("cell '" + key + "' already committed");
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error("write to result store " + path_.string() + " failed");
}

}  // namespace casbench

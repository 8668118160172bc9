#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace vrmod {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temp file, fsyncs, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

// Creates `path` with `contents` unless it already exists. Returns true when
// the file was written.
bool write_if_absent(const std::filesystem::path& path, std::string_view contents);

// Calls `fn` for every complete line of a JSON-lines file. A trailing line
// without a newline (a torn write) is reported through `torn_tail` and not
// passed to `fn`.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view line, std::size_t lineno)>& fn,
                   std::string* torn_tail = nullptr);

// Append-only line log. Each append is a single write(2) followed by
// fdatasync when `durable` is set.
class AppendLog {
 public:
  AppendLog(const std::filesystem::path& path, bool durable);
  ~AppendLog();
  AppendLog(const AppendLog&) = delete;
  AppendLog& operator=(const AppendLog&) = delete;

  void append(std::string_view line);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool durable_;
  std::mutex mu_;
};

}  // namespace vrmod

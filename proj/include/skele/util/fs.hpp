#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace skele::util {

namespace fs = std::filesystem;

// Owns a freshly created directory and removes it recursively on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view prefix = "skele");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    TempDir(TempDir&& other) noexcept;
    TempDir& operator=(TempDir&& other) noexcept;

    const fs::path& path() const { return path_; }
    // Stops owning the directory; it is left on disk.
    fs::path release();

private:
    fs::path path_;
};

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view contents);

// Resolves symlinks on the existing prefix and removes dot segments from the rest.
// Returns an empty path when resolution fails.
fs::path resolve(const fs::path& path) noexcept;

// True when `path` equals `root` or lies beneath it. Both must already be normalized.
bool lexically_within(const fs::path& path, const fs::path& root);

// Best-effort mime type from a file extension; unknown extensions map to application/octet-stream.
std::string mime_for(const fs::path& path);

struct FileStamp {
    fs::file_time_type mtime;
    std::uintmax_t size = 0;
    bool operator==(const FileStamp&) const = default;
};

// Regular files under `dir` (recursive), keyed by path relative to `dir` in generic form.
std::map<std::string, FileStamp> list_files(const fs::path& dir);

} // namespace skele::util

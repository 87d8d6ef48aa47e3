#include "skele/util/fs.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "skele/error.hpp"

namespace skele::util {

TempDir::TempDir(std::string_view prefix) {
    std::string templ = (fs::temp_directory_path() / (std::string(prefix) + "-XXXXXX")).string();
    if (::mkdtemp(templ.data()) == nullptr) throw Error("io_error", "mkdtemp failed for " + templ);
    path_ = fs::canonical(templ);
}

TempDir::~TempDir() {
    if (path_.empty()) return;
    std::error_code ec;
    fs::remove_all(path_, ec);
}

TempDir::TempDir(TempDir&& other) noexcept : path_(std::move(other.path_)) { other.path_.clear(); }

TempDir& TempDir::operator=(TempDir&& other) noexcept {
    if (this != &other) {
        if (!path_.empty()) {
            std::error_code ec;
            fs::remove_all(path_, ec);
        }
        path_ = std::move(other.path_);
        other.path_.clear();
    }
    return *this;
}

fs::path TempDir::release() {
    fs::path p = std::move(path_);
    path_.clear();
    return p;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("file_not_found", "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("io_error", "short write to " + path.string());
}

fs::path resolve(const fs::path& path) noexcept {
    std::error_code ec;
    auto p = fs::weakly_canonical(path, ec);
    if (ec) return {};
    return p.lexically_normal();
}

bool lexically_within(const fs::path& path, const fs::path& root) {
    auto p = path.begin();
    for (auto r = root.begin(); r != root.end(); ++r, ++p) {
        if (r->empty()) continue;  // trailing separator
        if (p == path.end() || *p != *r) return false;
    }
    return true;
}

std::string mime_for(const fs::path& path) {
    static const std::map<std::string, std::string> table = {
        {".txt", "text/plain"},       {".md", "text/markdown"},     {".csv", "text/csv"},
        {".tsv", "text/tab-separated-values"},                      {".html", "text/html"},
        {".htm", "text/html"},        {".css", "text/css"},         {".js", "text/javascript"},
        {".py", "text/x-python"},     {".json", "application/json"}, {".xml", "application/xml"},
        {".yaml", "text/yaml"},       {".yml", "text/yaml"},        {".png", "image/png"},
        {".jpg", "image/jpeg"},       {".jpeg", "image/jpeg"},      {".gif", "image/gif"},
        {".svg", "image/svg+xml"},    {".pdf", "application/pdf"},  {".zip", "application/zip"},
        {".xlsx", "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"},
        {".docx", "application/vnd.openxmlformats-officedocument.wordprocessingml.document"},
    };
    std::string ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = table.find(ext);
    return it == table.end() ? "application/octet-stream" : it->second;
}

std::map<std::string, FileStamp> list_files(const fs::path& dir) {
    std::map<std::string, FileStamp> out;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return out;
    for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        if (!it->is_regular_file(ec)) continue;
        FileStamp stamp{it->last_write_time(ec), it->file_size(ec)};
        out[it->path().lexically_relative(dir).generic_string()] = stamp;
    }
    return out;
}

} // namespace skele::util

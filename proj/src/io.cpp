#include "flycl/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace flycl {

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    if (!in) throw DataError("read failed: " + path.string());
    return buf;
}

namespace {

void write_then_rename(const std::filesystem::path& path, const char* data, std::size_t n) {
    auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp);
        out.write(data, static_cast<std::streamsize>(n));
        out.flush();
        if (!out) throw DataError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
    write_then_rename(path, bytes.data(), bytes.size());
}

void atomic_write_file(const std::filesystem::path& path, const std::string& text) {
    write_then_rename(path, text.data(), text.size());
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace flycl

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "flycl/errors.hpp"

namespace flycl {

// In-memory little-endian writer for the FLYM/FLYF containers.
class BinWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        le(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le(bits);
    }
    void magic(const char tag[5]) { buf_.insert(buf_.end(), tag, tag + 4); }
    void raw(const void* data, std::size_t n) {
        const char* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }

    std::size_t size() const { return buf_.size(); }
    const std::vector<char>& bytes() const { return buf_; }

    // Patch a previously written u64 (used for section length back-fill).
    void patch_u64(std::size_t at, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }

  private:
    template <class T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::vector<char> buf_;
};

// Little-endian reader; throws FormatError with the byte offset on truncation.
class BinReader {
  public:
    explicit BinReader(std::vector<char> data) : buf_(std::move(data)) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() { return le<std::uint16_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() {
        auto bits = le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        auto bits = le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void expect_magic(const char tag[5]) {
        const std::size_t at = pos_;
        const char* p = take(4);
        if (std::memcmp(p, tag, 4) != 0) throw FormatError(std::string("bad magic, expected ") + tag, at);
    }
    std::string magic4() {
        const char* p = take(4);
        return std::string(p, 4);
    }
    void raw(void* out, std::size_t n) { std::memcpy(out, take(n), n); }
    void skip(std::size_t n) { take(n); }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }
    bool eof() const { return pos_ == buf_.size(); }

  private:
    const char* take(std::size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError("truncated file", pos_);
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <class T>
    T le() {
        const char* p = take(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<std::uint8_t>(p[i])) << (8 * i);
        return v;
    }
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);

// Writes to <path>.tmp then renames, so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, const std::vector<char>& bytes);
void atomic_write_file(const std::filesystem::path& path, const std::string& text);

// Numbers formatted with '.' decimal separator and enough digits to
// round-trip doubles; deterministic byte-for-byte output.
std::string format_double(double v);

}  // namespace flycl

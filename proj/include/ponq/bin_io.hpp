// Little-endian binary readers/writers for the grid container formats.
// All formats this suite writes are little-endian by contract; we only build
// on little-endian hosts and memcpy scalars directly.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ponq/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace ponq {

class ByteWriter {
  public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
    }
    void put_magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
    void put_raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<unsigned char> take() { return std::move(bytes_); }

  private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
  public:
    ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<unsigned char>& v) : data_(v.data()), size_(v.size()) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void expect_magic(const char (&m)[5]) {
        need(4);
        if (std::memcmp(data_ + pos_, m, 4) != 0)
            throw format_error(std::string("bad magic, expected \"") + m + "\"");
        pos_ += 4;
    }
    void get_raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_ + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return size_ - pos_; }
    bool at_end() const { return pos_ == size_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > size_) throw format_error("truncated payload");
    }
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

// Whole-file helpers used by the CLI and tests.
std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);
void write_file(const std::string& path, const std::string& text);

}  // namespace ponq

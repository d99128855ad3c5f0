#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grd {

/// Little-endian append-only byte buffer for the binary file formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { append(&v, sizeof v); }
    void u32(std::uint32_t v) { append(&v, sizeof v); }
    void u64(std::uint64_t v) { append(&v, sizeof v); }
    void f64(double v) { append(&v, sizeof v); }
    void bytes(const void* data, std::size_t n) { append(data, n); }

    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    void append(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; throws FormatError past the end.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return *take(1); }
    std::uint16_t u16() { return read<std::uint16_t>(); }
    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    double f64() { return read<double>(); }
    void bytes(void* out, std::size_t n);

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

private:
    template <typename T>
    T read() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    const std::uint8_t* take(std::size_t n);

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

/// Whole-file helpers. write_file is atomic (write to a temp name, rename).
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace grd

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa::io {

/// Little-endian byte sink.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    /// u32 length followed by the raw bytes.
    void str(std::string_view s);

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    void write_file(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source; every read past the end throws FormatError
/// carrying the offending byte offset.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}
    static ByteReader from_file(const std::filesystem::path& path);

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::string bytes(std::size_t n);
    std::string str();

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n, const char* what);

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

inline constexpr std::uint8_t kRtenVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

/// RTEN v1: "RTEN", u8 version, u8 dtype, u32 rank (4), 4 x u64 dims, f32 payload.
void write_rten(ByteWriter& out, const Tensor& t);
Tensor read_rten(ByteReader& in);

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace ssa::io

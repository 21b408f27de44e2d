#include "ssa/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ssa::io {

static_assert(std::endian::native == std::endian::little, "RTEN I/O assumes a little-endian host");

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw Error("write failed for " + path.string());
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(buf));
}

void ByteReader::need(std::size_t n, const char* what) {
    if (remaining() < n) {
        throw FormatError(std::string("truncated input reading ") + what + " at byte offset " +
                          std::to_string(pos_) + " (need " + std::to_string(n) + ", have " +
                          std::to_string(remaining()) + ")");
    }
}

std::uint8_t ByteReader::u8() {
    need(1, "u8");
    return buf_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::bytes(std::size_t n) {
    need(n, "bytes");
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::string ByteReader::str() {
    const auto n = u32();
    return bytes(n);
}

void write_rten(ByteWriter& out, const Tensor& t) {
    out.bytes("RTEN");
    out.u8(kRtenVersion);
    out.u8(kDtypeF32);
    out.u32(4);
    const Shape& s = t.shape();
    out.u64(s.n);
    out.u64(s.c);
    out.u64(s.h);
    out.u64(s.w);
    for (float v : t.data()) out.f32(v);
}

Tensor read_rten(ByteReader& in) {
    const std::size_t start = in.offset();
    if (in.bytes(4) != "RTEN") {
        throw FormatError("bad RTEN magic at byte offset " + std::to_string(start));
    }
    const auto version = in.u8();
    if (version != kRtenVersion) {
        throw FormatError("unsupported RTEN version " + std::to_string(version));
    }
    const auto dtype = in.u8();
    if (dtype != kDtypeF32) throw FormatError("unsupported RTEN dtype " + std::to_string(dtype));
    const auto rank = in.u32();
    if (rank != 4) throw FormatError("RTEN rank must be 4, got " + std::to_string(rank));
    Shape s{in.u64(), in.u64(), in.u64(), in.u64()};
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
        throw FormatError("RTEN tensor at byte offset " + std::to_string(start) + " has a zero extent");
    }
    if (in.remaining() / 4 < s.numel()) {
        throw FormatError("truncated RTEN payload at byte offset " + std::to_string(in.offset()) +
                          " (tensor " + s.str() + ")");
    }
    std::vector<float> data(s.numel());
    for (auto& v : data) v = in.f32();
    return Tensor(s, std::move(data));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    ByteWriter w;
    write_rten(w, t);
    w.write_file(path);
}

Tensor load_tensor(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    return read_rten(r);
}

}  // namespace ssa::io

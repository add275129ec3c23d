#ifndef FWICERT_SERIALIZE_HPP
#define FWICERT_SERIALIZE_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fwicert/error.hpp"
#include "fwicert/tensor.hpp"

namespace fwicert {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

/// Byte buffer writer, little-endian. Accumulates in memory so a trailing
/// checksum can cover everything written before it.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }

    void bytes(const char* p, std::size_t n) {
        buf_.insert(buf_.end(), reinterpret_cast<const unsigned char*>(p),
                    reinterpret_cast<const unsigned char*>(p) + n);
    }

    void magic(const char (&m)[9]) { bytes(m, 8); }  // 8-byte magic + NUL in literal

    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
    }

    std::uint32_t crc() const { return crc32(buf_.data(), buf_.size()); }
    const std::vector<unsigned char>& buffer() const { return buf_; }

    void write_file(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open for writing: " + path.string());
        os.write(reinterpret_cast<const char*>(buf_.data()),
                 static_cast<std::streamsize>(buf_.size()));
        if (!os) throw Error("write failed: " + path.string());
    }

private:
    std::vector<unsigned char> buf_;
};

/// Byte buffer reader tracking its offset for error reporting.
class ByteReader {
public:
    explicit ByteReader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error("cannot open for reading: " + path.string());
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                       std::istreambuf_iterator<char>());
        return ByteReader(std::move(buf));
    }

    std::size_t offset() const { return pos_; }
    std::size_t size() const { return buf_.size(); }
    const std::vector<unsigned char>& buffer() const { return buf_; }

    std::uint8_t u8() {
        need(1, "u8");
        return buf_[pos_++];
    }

    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8, "f64");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_magic(const char (&m)[9], const std::string& format_name) {
        need(8, "magic");
        if (std::memcmp(buf_.data() + pos_, m, 8) != 0)
            throw FormatError(format_name + ": bad magic, expected \"" + std::string(m, 8) + "\"",
                              pos_);
        pos_ += 8;
    }

    Tensor tensor(std::size_t max_elems = std::size_t(1) << 30) {
        const std::size_t start = pos_;
        const std::uint32_t rank = u32();
        if (rank > 16) throw FormatError("tensor rank " + std::to_string(rank) + " implausible", start);
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = u32();
            if (shape[d] == 0) throw FormatError("zero tensor dimension", pos_ - 4);
            n *= shape[d];
            if (n > max_elems) throw FormatError("tensor too large", pos_ - 4);
        }
        std::vector<double> data(rank == 0 ? 0 : n);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = f64();
        return Tensor(std::move(shape), std::move(data));
    }

    /// CRC over bytes [0, pos) compared against the next u32.
    void check_crc(const std::string& format_name) {
        const std::uint32_t expected = crc32(buf_.data(), pos_);
        const std::size_t at = pos_;
        const std::uint32_t stored = u32();
        if (stored != expected)
            throw FormatError(format_name + ": checksum mismatch", at);
    }

    void expect_end(const std::string& format_name) {
        if (pos_ != buf_.size())
            throw FormatError(format_name + ": trailing bytes", pos_);
    }

private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > buf_.size())
            throw FormatError(std::string("truncated while reading ") + what, pos_);
    }

    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
};

// Raw tensor file: 8-byte magic "FWITNSR1", u32 rank, u32 dims..., f64 payload.
inline constexpr char kTensorMagic[9] = "FWITNSR1";

inline void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic(kTensorMagic);
    w.tensor(t);
    w.write_file(path);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    ByteReader r = ByteReader::from_file(path);
    r.expect_magic(kTensorMagic, "tensor file");
    Tensor t = r.tensor();
    r.expect_end("tensor file");
    return t;
}

} // namespace fwicert

#endif

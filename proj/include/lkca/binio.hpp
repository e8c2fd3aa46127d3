#pragma once

#include <lkca/error.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lkca::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template<typename U>
U byteswap_if_big(U v) {
    if constexpr (std::endian::native == std::endian::big) {
        U out{};
        auto* src = reinterpret_cast<const unsigned char*>(&v);
        auto* dst = reinterpret_cast<unsigned char*>(&out);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            dst[i] = src[sizeof(U) - 1 - i];
        }
        return out;
    } else {
        return v;
    }
}

/// Append-only little-endian byte sink.
class Writer {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    template<typename U>
    void scalar(U v) {
        v = byteswap_if_big(v);
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(U));
    }

    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }

    void f32_array(std::span<const float> values) {
        if constexpr (std::endian::native == std::endian::little) {
            const auto* p = reinterpret_cast<const unsigned char*>(values.data());
            buf_.insert(buf_.end(), p, p + values.size_bytes());
        } else {
            for (float f : values) {
                scalar(f);
            }
        }
    }

    void string_u32(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    [[nodiscard]] const std::vector<unsigned char>& buffer() const { return buf_; }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) {
            fail_validation("cannot open '" + path + "' for writing");
        }
        os.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!os) {
            fail_validation("write to '" + path + "' failed");
        }
    }

private:
    std::vector<unsigned char> buf_;
};

/// Bounds-checked little-endian reader. Every read past the end throws a truncation error.
class Reader {
public:
    explicit Reader(std::vector<unsigned char> data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

    static Reader from_file(const std::string& path, const std::string& what) {
        std::ifstream is(path, std::ios::binary);
        if (!is) {
            fail_validation(what + ": cannot open '" + path + "'");
        }
        std::vector<unsigned char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        return Reader(std::move(data), what);
    }

    [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::uint64_t n, const char* field) const {
        if (n > remaining()) {
            fail_validation(what_ + ": truncated payload while reading " + field + " (need " + std::to_string(n) +
                            " bytes, " + std::to_string(remaining()) + " remain)");
        }
    }

    std::string bytes(std::size_t n, const char* field) {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    template<typename U>
    U scalar(const char* field) {
        need(sizeof(U), field);
        U v;
        std::memcpy(&v, data_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return byteswap_if_big(v);
    }

    std::uint32_t u32(const char* field) { return scalar<std::uint32_t>(field); }
    std::uint64_t u64(const char* field) { return scalar<std::uint64_t>(field); }

    void f32_array(std::span<float> out, const char* field) {
        need(static_cast<std::uint64_t>(out.size()) * sizeof(float), field);
        std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
        if constexpr (std::endian::native == std::endian::big) {
            for (auto& f : out) {
                f = byteswap_if_big(f);
            }
        }
    }

    std::string string_u32(const char* field) {
        const auto n = u32(field);
        return bytes(n, field);
    }

    [[nodiscard]] const std::string& what() const { return what_; }

private:
    std::vector<unsigned char> data_;
    std::size_t                pos_ = 0;
    std::string                what_;
};

} // namespace lkca::binio

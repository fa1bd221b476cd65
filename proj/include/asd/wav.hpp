#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asd/errors.hpp"

namespace asd {

struct WavError : IoError {
    using IoError::IoError;
};

inline constexpr int kSampleRate = 16000;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace detail

// Writes mono PCM 16-bit at 16 kHz. Samples are clamped to [-1, 1] and
// quantized by rounding (no dither) so the file bytes are a pure function
// of the input.
inline void write_wav(const std::filesystem::path& path,
                      const std::vector<double>& samples) {
    const std::uint32_t n = static_cast<std::uint32_t>(samples.size());
    const std::uint32_t data_bytes = n * 2;
    std::string buf;
    buf.reserve(44 + data_bytes);
    buf += "RIFF";
    detail::put_u32(buf, 36 + data_bytes);
    buf += "WAVEfmt ";
    detail::put_u32(buf, 16);
    detail::put_u16(buf, 1);  // PCM
    detail::put_u16(buf, 1);  // mono
    detail::put_u32(buf, kSampleRate);
    detail::put_u32(buf, kSampleRate * 2);
    detail::put_u16(buf, 2);
    detail::put_u16(buf, 16);
    buf += "data";
    detail::put_u32(buf, data_bytes);
    for (double s : samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
        detail::put_u16(buf, static_cast<std::uint16_t>(q));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WavError("cannot open for writing: " + path.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw WavError("write failed: " + path.string());
}

// Reads mono PCM 16-bit 16 kHz WAV into normalized doubles in [-1, 1).
// Any other encoding is rejected rather than converted.
inline std::vector<double> read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WavError("cannot open: " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw WavError("not a RIFF/WAVE file: " + path.string());

    // Walk chunks; tolerate extra chunks before fmt/data.
    std::size_t pos = 12;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;
    while (pos + 8 <= raw.size()) {
        const std::uint32_t len = detail::get_u32(raw.data() + pos + 4);
        if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
            if (pos + 8 + 16 > raw.size())
                throw WavError("truncated fmt chunk: " + path.string());
            const unsigned char* p = raw.data() + pos + 8;
            const std::uint16_t format = detail::get_u16(p);
            const std::uint16_t channels = detail::get_u16(p + 2);
            const std::uint32_t rate = detail::get_u32(p + 4);
            const std::uint16_t bits = detail::get_u16(p + 14);
            if (format != 1 || bits != 16)
                throw WavError("unsupported encoding (need PCM 16-bit): " + path.string());
            if (channels != 1)
                throw WavError("unsupported channel count (need mono): " + path.string());
            if (rate != kSampleRate)
                throw WavError("unsupported sample rate (need 16 kHz): " + path.string());
            have_fmt = true;
        } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }
    if (!have_fmt || data_off == 0)
        throw WavError("missing fmt or data chunk: " + path.string());
    if (data_off + data_len > raw.size())
        throw WavError("truncated data chunk: " + path.string());

    std::vector<double> samples(data_len / 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(
            detail::get_u16(raw.data() + data_off + 2 * i));
        samples[i] = static_cast<double>(v) / 32767.0;
    }
    return samples;
}

}  // namespace asd

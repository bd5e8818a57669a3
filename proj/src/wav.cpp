#include "kse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "kse/io.hpp"

namespace kse {

namespace {

std::uint32_t u32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t u16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

void put32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  const std::string b = read_file(path);
  auto fail = [&](const std::string& why) { return DataError(path + ": " + why); };
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t size = u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) throw fail("truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw fail("short fmt chunk");
      format = u16(b, body);
      channels = u16(b, body + 2);
      rate = u32(b, body + 4);
      bits = u16(b, body + 14);
      if (format == 0xFFFE && size >= 26) format = u16(b, body + 24);  // extensible
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      if (channels != 1) throw fail(std::to_string(channels) + " channels; only mono is supported");
      if (rate == 0) throw fail("zero sample rate");
      Waveform w;
      w.sample_rate = rate;
      if (format == 1 && bits == 16) {
        const std::size_t n = size / 2;
        w.samples.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
          w.samples[static_cast<Eigen::Index>(i)] =
              static_cast<std::int16_t>(u16(b, body + 2 * i)) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        const std::size_t n = size / 4;
        w.samples.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
          const std::uint32_t raw = u32(b, body + 4 * i);
          float f;
          std::memcpy(&f, &raw, 4);
          if (!std::isfinite(f)) throw fail("non-finite sample");
          w.samples[static_cast<Eigen::Index>(i)] = f;
        }
      } else {
        throw fail("unsupported encoding (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits); expected PCM16 or float32");
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

void write_wav(const std::string& path, const Waveform& w, WavFormat format) {
  if (!(w.sample_rate > 0.0) || w.sample_rate != std::round(w.sample_rate)) {
    throw DataError("write_wav: sample rate must be a positive integer");
  }
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::pcm16 ? 1 : 3;
  const auto rate = static_cast<std::uint32_t>(w.sample_rate);
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * bits / 8);
  std::string b;
  b.reserve(44 + data_bytes);
  b += "RIFF";
  put32(b, 36 + data_bytes);
  b += "WAVEfmt ";
  put32(b, 16);
  put16(b, tag);
  put16(b, 1);
  put32(b, rate);
  put32(b, rate * bits / 8);
  put16(b, bits / 8);
  put16(b, bits);
  b += "data";
  put32(b, data_bytes);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double x = w.samples[i];
    if (!std::isfinite(x)) throw DataError("write_wav: non-finite sample at " + std::to_string(i));
    if (format == WavFormat::pcm16) {
      const double c = std::clamp(x, -1.0, 1.0);
      const auto v = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
      put16(b, static_cast<std::uint16_t>(v));
    } else {
      const float f = static_cast<float>(x);
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      put32(b, raw);
    }
  }
  write_file_atomic(path, b);
}

}  // namespace kse

#pragma once

#include <string>

#include "kse/dsp.hpp"

namespace kse {

enum class WavFormat { pcm16, float32 };

/// Mono PCM16 or float32 RIFF/WAVE. Multichannel files are rejected.
Waveform read_wav(const std::string& path);

/// PCM16 output is clipped to [-1, 1]. Written atomically.
void write_wav(const std::string& path, const Waveform& w, WavFormat format = WavFormat::float32);

}  // namespace kse

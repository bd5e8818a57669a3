#pragma once

// Deterministic synthetic corpus: harmonic "speech" and a few noise types.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kse/dsp.hpp"

namespace kse {

struct CorpusConfig {
  int utterances = 40;
  double duration_s = 2.0;
  double sample_rate = 16000.0;
  std::vector<std::string> noises{"white", "ssn"};
  std::uint64_t seed = 1;
};

void validate(const CorpusConfig& cfg);

/// Known noise names.
const std::vector<std::string>& noise_kinds();

struct CorpusItem {
  std::string name;  // "utt003"
  Waveform clean;
  std::map<std::string, Waveform> noises;  // one per configured kind
};

/// Utterance i is generated from seed + i alone.
std::vector<CorpusItem> synth_corpus(const CorpusConfig& cfg);

/// Voiced tone complex below 4 kHz with syllable envelopes and silences.
Waveform synth_speech(double duration_s, double sample_rate, std::uint64_t seed);

/// One noise of the named kind:
///   white   Gaussian
///   ssn     white through a fixed low-pass shaping filter
///   babble  ssn under a slow random amplitude modulation
///   banded  four equal-width frequency bands, each with its own level and
///           modulation rate
Waveform synth_noise(const std::string& kind, double duration_s, double sample_rate,
                     std::uint64_t seed);

}  // namespace kse

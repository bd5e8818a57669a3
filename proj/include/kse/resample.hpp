#pragma once

#include "kse/dsp.hpp"

namespace kse {

/// Band-limited resampling with a Blackman-windowed sinc (16 zero crossings
/// per side). Identity when the rates match.
Waveform resample(const Waveform& w, double target_rate);

}  // namespace kse

#pragma once

#include "respnet/audio.hpp"

namespace respnet::dsp {

// Band-limited sample-rate conversion (polyphase windowed sinc, Kaiser
// window beta = 8.6, 64 taps per phase). Pass-through when rates match.
AudioClip resample(const AudioClip& clip, int target_rate);

enum class DurationMode {
  Exact,    // cyclic repetition then truncation to exactly target_s
  AtLeast,  // whole-copy repetition until >= target_s; longer clips untouched
};

AudioClip normalize_duration(const AudioClip& clip, double target_s, DurationMode mode);

// Zero-phase (forward-backward) Butterworth band-pass, design order 4
// (8 poles as 4 biquad sections). Output length equals input length.
AudioClip bandpass(const AudioClip& clip, double lo_hz, double hi_hz);

// Scales so that max |sample| == 1 (no-op on silence).
AudioClip peak_normalize(const AudioClip& clip);

}  // namespace respnet::dsp

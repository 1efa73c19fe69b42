#pragma once

#include <filesystem>
#include <vector>

#include "respnet/audio.hpp"

namespace respnet {

// PCM WAV decoding. Accepts 16-bit integer and 32-bit float data, mono or
// multichannel (first channel is taken). Anything else is rejected.
AudioClip read_wav(const std::filesystem::path& path);

// Reads just the sample rate from the header without decoding the data.
int read_wav_rate(const std::filesystem::path& path);

// 16-bit PCM writer (values clamped to [-1, 1]).
void write_wav16(const std::filesystem::path& path, const std::vector<float>& samples,
                 int sample_rate);

}  // namespace respnet

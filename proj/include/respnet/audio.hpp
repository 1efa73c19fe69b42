#pragma once

#include <string>
#include <vector>

namespace respnet {

// Where a clip came from: recording key plus, for per-cycle clips, the
// cycle index within that recording (-1 means the whole recording).
struct SourceRef {
  std::string recording_key;
  int cycle_index = -1;

  std::string str() const {
    if (cycle_index < 0) return recording_key;
    return recording_key + "#" + std::to_string(cycle_index);
  }
};

// Mono sample buffer. All processing stages operate on this type.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;  // Hz
  SourceRef source;

  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

}  // namespace respnet

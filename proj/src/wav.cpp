#include "respnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "respnet/error.hpp"

namespace respnet {
namespace {

struct FmtChunk {
  uint16_t format = 0;  // 1 = PCM, 3 = IEEE float, 0xfffe = extensible
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
};

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

// Walks RIFF chunks until both fmt and data are seen. Returns the fmt info
// and the file offset/size of the data payload.
FmtChunk scan_chunks(std::ifstream& in, const std::filesystem::path& path,
                     std::streamoff* data_pos, uint32_t* data_size) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    fail(Errc::BadFormat, "not a RIFF file: " + path.string());
  read_le<uint32_t>(in);
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    fail(Errc::BadFormat, "not a WAVE file: " + path.string());

  FmtChunk fmt;
  bool have_fmt = false, have_data = false;
  while (in && !(have_fmt && have_data)) {
    in.read(tag, 4);
    uint32_t size = read_le<uint32_t>(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::streamoff next = in.tellg() + static_cast<std::streamoff>(size + (size & 1));
      fmt.format = read_le<uint16_t>(in);
      fmt.channels = read_le<uint16_t>(in);
      fmt.sample_rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);  // byte rate
      read_le<uint16_t>(in);  // block align
      fmt.bits_per_sample = read_le<uint16_t>(in);
      if (fmt.format == 0xfffe && size >= 40) {
        read_le<uint16_t>(in);  // cbSize
        read_le<uint16_t>(in);  // valid bits
        read_le<uint32_t>(in);  // channel mask
        fmt.format = read_le<uint16_t>(in);  // first bytes of SubFormat GUID
      }
      in.seekg(next);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      *data_pos = in.tellg();
      *data_size = size;
      in.seekg(static_cast<std::streamoff>(size + (size & 1)), std::ios::cur);
      have_data = true;
    } else {
      in.seekg(static_cast<std::streamoff>(size + (size & 1)), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data)
    fail(Errc::BadFormat, "missing fmt/data chunk: " + path.string());
  return fmt;
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::streamoff data_pos = 0;
  uint32_t data_size = 0;
  FmtChunk fmt = scan_chunks(in, path, &data_pos, &data_size);

  if (fmt.channels == 0 || fmt.sample_rate == 0)
    fail(Errc::BadFormat, "bad fmt chunk: " + path.string());
  const bool pcm16 = fmt.format == 1 && fmt.bits_per_sample == 16;
  const bool f32 = fmt.format == 3 && fmt.bits_per_sample == 32;
  if (!pcm16 && !f32)
    fail(Errc::BadFormat, "unsupported WAV encoding (want 16-bit PCM or 32-bit float): " +
                              path.string());

  const int bytes_per_sample = fmt.bits_per_sample / 8;
  const size_t frame_bytes = static_cast<size_t>(bytes_per_sample) * fmt.channels;
  const size_t n_frames = data_size / frame_bytes;

  std::vector<char> raw(data_size);
  in.clear();
  in.seekg(data_pos);
  in.read(raw.data(), data_size);
  if (!in) fail(Errc::IoError, "truncated data chunk: " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    const char* p = raw.data() + i * frame_bytes;  // first channel only
    if (pcm16) {
      int16_t v;
      std::memcpy(&v, p, 2);
      clip.samples[i] = static_cast<float>(v) / 32768.0f;
    } else {
      float v;
      std::memcpy(&v, p, 4);
      clip.samples[i] = v;
    }
  }
  for (float s : clip.samples)
    if (!std::isfinite(s)) fail(Errc::BadFormat, "non-finite sample in " + path.string());
  return clip;
}

int read_wav_rate(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::streamoff data_pos = 0;
  uint32_t data_size = 0;
  FmtChunk fmt = scan_chunks(in, path, &data_pos, &data_size);
  return static_cast<int>(fmt.sample_rate);
}

void write_wav16(const std::filesystem::path& path, const std::vector<float>& samples,
                 int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot create " + path.string());

  auto put16 = [&](uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  auto put32 = [&](uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
  };

  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(static_cast<uint32_t>(sample_rate));
  put32(static_cast<uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (float s : samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    int v = static_cast<int>(std::lround(c * 32767.0f));
    put16(static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!out) fail(Errc::IoError, "write failed: " + path.string());
}

}  // namespace respnet

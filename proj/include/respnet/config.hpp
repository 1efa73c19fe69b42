#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace respnet {

// Flat key=value configuration with [section] headers (keys become
// "section.key"). Merge order is presets, then file, then RESPNET_*
// environment variables, then command-line flags; the resolved view is
// written next to every artifact a run produces.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;

  void load_file(const std::filesystem::path& path);
  void apply_env(const char* prefix = "RESPNET_");
  void apply_preset(const std::string& name);  // paper-baseline | paper-final
  void save(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace respnet

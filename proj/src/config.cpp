#include "respnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include "respnet/error.hpp"

extern char** environ;

namespace respnet {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (...) {
    fail(Errc::UsageError, "config key " + key + " is not an integer: " + it->second);
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    fail(Errc::UsageError, "config key " + key + " is not a number: " + it->second);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(Errc::UsageError, "config key " + key + " is not a boolean: " + it->second);
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (...) {
    fail(Errc::UsageError, "config key " + key + " is not an integer: " + it->second);
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open config " + path.string());
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": want key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    kv_[key] = value;
  }
}

void RunConfig::apply_env(const char* prefix) {
  const size_t plen = std::string(prefix).size();
  for (char** env = environ; *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(plen, eq - plen);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    // First underscore separates the section: RESPNET_TRAIN_LR -> train.lr
    const auto us = key.find('_');
    if (us != std::string::npos) key[us] = '.';
    kv_[key] = entry.substr(eq + 1);
  }
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "paper-baseline") {
    kv_["run.model"] = "baseline";
    kv_["run.frontends"] = "scal-morse";
  } else if (name == "paper-final") {
    // inception-01 ensembled over scalogram (Morse) and gammatonegram
    kv_["run.model"] = "inception-01";
    kv_["run.frontends"] = "scal-morse,gamma";
  } else {
    fail(Errc::UsageError, "unknown preset '" + name + "'");
  }
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot create " + path.string());
  for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  if (!out) fail(Errc::IoError, "write failed: " + path.string());
}

}  // namespace respnet

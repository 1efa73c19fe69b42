#include "respnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "respnet/error.hpp"
#include "respnet/wav.hpp"

namespace respnet {
namespace {

constexpr const char* kManifestHeader = "#respnet-manifest v1";

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool parse_int(const std::string& s, int* out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(const std::string& s, double* out) {
  try {
    size_t pos = 0;
    *out = std::stod(s, &pos);
    return pos == s.size() && std::isfinite(*out);
  } catch (...) {
    return false;
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_cr(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  return line;
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }
const char* disease_name(DiseaseClass c) {
  switch (c) {
    case DiseaseClass::Chronic: return "chronic";
    case DiseaseClass::NonChronic: return "nonchronic";
    case DiseaseClass::Healthy: return "healthy";
  }
  return "?";
}

}  // namespace

RecordingMeta parse_recording_filename(const std::string& stem) {
  auto fields = split_on(stem, '_');
  if (fields.size() != 5)
    fail(Errc::MalformedName, "expected 5 underscore-separated fields: " + stem);
  RecordingMeta meta;
  if (!parse_int(fields[0], &meta.patient_id) || meta.patient_id < 0)
    fail(Errc::MalformedName, "non-numeric patient id: " + stem);
  meta.recording_key = stem;
  meta.recording_index = fields[1];
  meta.chest_location = fields[2];
  meta.acquisition_mode = fields[3];
  meta.equipment = fields[4];
  return meta;
}

std::vector<CycleAnnotation> parse_annotation_file(const std::string& text) {
  std::vector<CycleAnnotation> cycles;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_ws(line);
    if (fields.size() != 4)
      fail(Errc::MalformedLine, "line " + std::to_string(lineno) + ": expected 4 fields");
    CycleAnnotation ann;
    int cr = 0, wh = 0;
    if (!parse_double(fields[0], &ann.onset_s) || !parse_double(fields[1], &ann.offset_s) ||
        !parse_int(fields[2], &cr) || !parse_int(fields[3], &wh) || (cr != 0 && cr != 1) ||
        (wh != 0 && wh != 1))
      fail(Errc::MalformedLine, "line " + std::to_string(lineno) + ": bad field value");
    if (ann.onset_s < 0.0 || ann.offset_s <= ann.onset_s)
      fail(Errc::NonMonotoneCycle,
           "line " + std::to_string(lineno) + ": offset must exceed onset");
    ann.crackle = cr == 1;
    ann.wheeze = wh == 1;
    cycles.push_back(ann);
  }
  return cycles;
}

std::string render_annotations(const std::vector<CycleAnnotation>& cycles) {
  std::ostringstream out;
  for (const auto& c : cycles) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%d\t%d\n", c.onset_s, c.offset_s,
                  c.crackle ? 1 : 0, c.wheeze ? 1 : 0);
    out << buf;
  }
  return out.str();
}

CycleClass cycle_label(bool crackle, bool wheeze) {
  if (crackle && wheeze) return CycleClass::Both;
  if (crackle) return CycleClass::Crackle;
  if (wheeze) return CycleClass::Wheeze;
  return CycleClass::Normal;
}

DiseaseClass disease_label_class(const std::string& diagnosis) {
  static const std::map<std::string, DiseaseClass> vocab = {
      {"COPD", DiseaseClass::Chronic},          {"Bronchiectasis", DiseaseClass::Chronic},
      {"Asthma", DiseaseClass::Chronic},        {"URTI", DiseaseClass::NonChronic},
      {"LRTI", DiseaseClass::NonChronic},       {"Pneumonia", DiseaseClass::NonChronic},
      {"Bronchiolitis", DiseaseClass::NonChronic}, {"Healthy", DiseaseClass::Healthy},
  };
  auto it = vocab.find(diagnosis);
  if (it == vocab.end()) fail(Errc::UnknownDiagnosis, "'" + diagnosis + "'");
  return it->second;
}

DiseaseLabel disease_label(const std::string& diagnosis) {
  return DiseaseLabel{disease_label_class(diagnosis), diagnosis};
}

const std::vector<std::string>& cycle_class_names() {
  static const std::vector<std::string> names = {"Normal", "Crackle", "Wheeze", "Both"};
  return names;
}

const std::vector<std::string>& disease_class_names() {
  static const std::vector<std::string> names = {"Chronic", "NonChronic", "Healthy"};
  return names;
}

std::map<std::string, Split> parse_split_file(const std::filesystem::path& path) {
  std::map<std::string, Split> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 2)
      fail(Errc::MalformedLine, path.string() + ":" + std::to_string(lineno));
    Split s;
    if (fields[1] == "train")
      s = Split::Train;
    else if (fields[1] == "test")
      s = Split::Test;
    else
      fail(Errc::MalformedLine,
           path.string() + ":" + std::to_string(lineno) + ": want train|test");
    out[fields[0]] = s;
  }
  return out;
}

std::map<int, std::string> parse_diagnosis_file(const std::filesystem::path& path) {
  std::map<int, std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, '\t');
    int pid = -1;
    if (fields.size() != 2 || !parse_int(fields[0], &pid))
      fail(Errc::MalformedLine, path.string() + ":" + std::to_string(lineno));
    out[pid] = fields[1];
  }
  return out;
}

Manifest build_manifest(const std::filesystem::path& data_dir,
                        const std::filesystem::path& split_file,
                        const std::filesystem::path& diagnosis_file) {
  auto split = parse_split_file(split_file);
  auto diagnosis = parse_diagnosis_file(diagnosis_file);

  std::vector<std::filesystem::path> wavs;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());

  Manifest m;
  std::set<std::string> seen_keys;
  for (const auto& wav : wavs) {
    Recording rec;
    rec.meta = parse_recording_filename(wav.stem().string());
    if (!seen_keys.insert(rec.meta.recording_key).second)
      fail(Errc::DuplicateKey, rec.meta.recording_key);
    rec.meta.audio_path = wav;
    rec.meta.sample_rate_native = read_wav_rate(wav);

    auto ann_path = wav;
    ann_path.replace_extension(".txt");
    if (!std::filesystem::exists(ann_path))
      fail(Errc::MissingAnnotation, ann_path.string());
    rec.cycles = parse_annotation_file(read_text_file(ann_path));

    auto sit = split.find(rec.meta.recording_key);
    if (sit == split.end()) fail(Errc::MissingSplitEntry, rec.meta.recording_key);
    rec.split = sit->second;

    auto dit = diagnosis.find(rec.meta.patient_id);
    if (dit == diagnosis.end()) {
      // No diagnosis for this patient: drop the recording, report the count.
      m.report.n_missing_diagnosis++;
      m.report.dropped_keys.push_back(rec.meta.recording_key);
      continue;
    }
    rec.disease = disease_label(dit->second);
    m.recordings.push_back(std::move(rec));
  }

  // Patient independence: every patient sits entirely on one side.
  std::map<int, Split> side;
  for (const auto& rec : m.recordings) {
    auto it = side.find(rec.meta.patient_id);
    if (it == side.end())
      side[rec.meta.patient_id] = rec.split;
    else if (it->second != rec.split)
      fail(Errc::SplitLeak,
           "patient " + std::to_string(rec.meta.patient_id) + " appears in both splits");
  }

  m.report.n_recordings = static_cast<int>(m.recordings.size());
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot create " + path.string());
  out << kManifestHeader << "\n";
  out << "# key\tpatient\tindex\tlocation\tmode\tequipment\tpath\trate\tsplit\tdiagnosis\tdisease\tcycles\n";
  for (const auto& rec : recordings) {
    out << rec.meta.recording_key << '\t' << rec.meta.patient_id << '\t'
        << rec.meta.recording_index << '\t' << rec.meta.chest_location << '\t'
        << rec.meta.acquisition_mode << '\t' << rec.meta.equipment << '\t'
        << rec.meta.audio_path.string() << '\t' << rec.meta.sample_rate_native << '\t'
        << split_name(rec.split) << '\t' << rec.disease.raw_diagnosis << '\t'
        << disease_name(rec.disease.cls) << '\t';
    if (rec.cycles.empty()) {
      out << '-';
    } else {
      for (size_t i = 0; i < rec.cycles.size(); ++i) {
        const auto& c = rec.cycles[i];
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.6f:%.6f:%d:%d", c.onset_s, c.offset_s,
                      c.crackle ? 1 : 0, c.wheeze ? 1 : 0);
        out << (i ? ";" : "") << buf;
      }
    }
    out << '\n';
  }
  if (!out) fail(Errc::IoError, "write failed: " + path.string());
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader)
    fail(Errc::BadFormat, "missing manifest header in " + path.string());

  Manifest m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto f = split_on(line, '\t');
    if (f.size() != 12)
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": bad arity");
    Recording rec;
    rec.meta.recording_key = f[0];
    if (!parse_int(f[1], &rec.meta.patient_id))
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": patient id");
    rec.meta.recording_index = f[2];
    rec.meta.chest_location = f[3];
    rec.meta.acquisition_mode = f[4];
    rec.meta.equipment = f[5];
    rec.meta.audio_path = f[6];
    if (!parse_int(f[7], &rec.meta.sample_rate_native))
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": rate");
    if (f[8] == "train")
      rec.split = Split::Train;
    else if (f[8] == "test")
      rec.split = Split::Test;
    else
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": split");
    rec.disease = disease_label(f[9]);
    if (disease_name(rec.disease.cls) != f[10])
      fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": disease class");
    if (f[11] != "-") {
      for (const auto& tok : split_on(f[11], ';')) {
        auto parts = split_on(tok, ':');
        CycleAnnotation ann;
        int cr = 0, wh = 0;
        if (parts.size() != 4 || !parse_double(parts[0], &ann.onset_s) ||
            !parse_double(parts[1], &ann.offset_s) || !parse_int(parts[2], &cr) ||
            !parse_int(parts[3], &wh))
          fail(Errc::BadFormat, path.string() + ":" + std::to_string(lineno) + ": cycle");
        ann.crackle = cr == 1;
        ann.wheeze = wh == 1;
        rec.cycles.push_back(ann);
      }
    }
    m.recordings.push_back(std::move(rec));
  }
  m.report.n_recordings = static_cast<int>(m.recordings.size());
  return m;
}

std::vector<const Recording*> Manifest::in_split(Split s) const {
  std::vector<const Recording*> out;
  for (const auto& rec : recordings)
    if (rec.split == s) out.push_back(&rec);
  return out;
}

AudioClip load_recording_audio(const Recording& rec) {
  AudioClip clip = read_wav(rec.meta.audio_path);
  clip.source = SourceRef{rec.meta.recording_key, -1};
  return clip;
}

AudioClip slice_cycle(const AudioClip& clip, const CycleAnnotation& ann, int cycle_index) {
  require(clip.sample_rate > 0, Errc::EmptyClip, "clip has no sample rate");
  auto b = static_cast<size_t>(std::llround(ann.onset_s * clip.sample_rate));
  auto e = static_cast<size_t>(std::llround(ann.offset_s * clip.sample_rate));
  b = std::min(b, clip.samples.size());
  e = std::min(std::max(e, b), clip.samples.size());
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + b, clip.samples.begin() + e);
  out.source = SourceRef{clip.source.recording_key, cycle_index};
  if (out.samples.empty()) fail(Errc::EmptyClip, out.source.str());
  return out;
}

}  // namespace respnet

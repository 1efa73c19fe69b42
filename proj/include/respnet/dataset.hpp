#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "respnet/audio.hpp"

namespace respnet {

struct RecordingMeta {
  int patient_id = -1;
  std::string recording_key;  // filename stem, unique within a manifest
  std::string recording_index;
  std::string chest_location;
  std::string acquisition_mode;
  std::string equipment;
  std::filesystem::path audio_path;
  int sample_rate_native = 0;
};

struct CycleAnnotation {
  double onset_s = 0.0;
  double offset_s = 0.0;
  bool crackle = false;
  bool wheeze = false;
};

// Task 1 label taxonomy.
enum class CycleClass { Normal = 0, Crackle = 1, Wheeze = 2, Both = 3 };

// Task 2 label taxonomy.
enum class DiseaseClass { Chronic = 0, NonChronic = 1, Healthy = 2 };

enum class Split { Train, Test };

struct DiseaseLabel {
  DiseaseClass cls = DiseaseClass::Healthy;
  std::string raw_diagnosis;
};

struct Recording {
  RecordingMeta meta;
  std::vector<CycleAnnotation> cycles;
  DiseaseLabel disease;
  Split split = Split::Train;
};

struct IngestReport {
  int n_recordings = 0;
  int n_missing_diagnosis = 0;  // recordings dropped: patient absent from diagnosis file
  std::vector<std::string> dropped_keys;
};

struct Manifest {
  std::vector<Recording> recordings;
  IngestReport report;

  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

  std::vector<const Recording*> in_split(Split s) const;
};

// "101_1b1_Al_sc_Meditron" -> patient 101, index "1b1", location "Al",
// mode "sc", equipment "Meditron". Location/mode/equipment tokens are kept
// verbatim; only arity and a numeric patient id are enforced.
RecordingMeta parse_recording_filename(const std::string& stem);

// One cycle per nonempty line: onset offset crackle-flag wheeze-flag.
std::vector<CycleAnnotation> parse_annotation_file(const std::string& text);
std::string render_annotations(const std::vector<CycleAnnotation>& cycles);

CycleClass cycle_label(bool crackle, bool wheeze);
DiseaseClass disease_label_class(const std::string& diagnosis);
DiseaseLabel disease_label(const std::string& diagnosis);

const std::vector<std::string>& cycle_class_names();    // C = 4
const std::vector<std::string>& disease_class_names();  // C = 3

// Scans data_dir for .wav/.txt pairs, attaches split and diagnosis info and
// validates patient independence of the split. Recordings whose patient has
// no diagnosis entry are dropped and counted in the report.
Manifest build_manifest(const std::filesystem::path& data_dir,
                        const std::filesystem::path& split_file,
                        const std::filesystem::path& diagnosis_file);

// Two-column tab-separated parsers used by build_manifest.
std::map<std::string, Split> parse_split_file(const std::filesystem::path& path);
std::map<int, std::string> parse_diagnosis_file(const std::filesystem::path& path);

AudioClip load_recording_audio(const Recording& rec);
AudioClip slice_cycle(const AudioClip& clip, const CycleAnnotation& ann, int cycle_index);

}  // namespace respnet

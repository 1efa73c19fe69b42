#include "respnet/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "respnet/error.hpp"

namespace respnet::models {
namespace {

using nn::BatchNorm;
using nn::Conv2d;
using nn::Dense;
using nn::Dropout;
using nn::GlobalMaxPool;
using nn::Inception;
using nn::Layer;
using nn::MaxPool2d;
using nn::ReLU;
using nn::Softmax;

// Default inception variant table. Every variant keeps a [1x4] kernel branch
// (1 along frequency, 4 along time) to match the narrowband, sustained shape
// of wheeze content; 01 uses 1x1 reductions, 02 is the naive form, 03 is
// factorized, 04 adds a projected skip on top of 01.
constexpr const char* kDefaultVariants = R"(
[inception-01]
branch = conv1x1
branch = conv1x1@half > conv3x3
branch = conv1x1@half > conv1x4
branch = pool3x3 > conv1x1
residual = none

[inception-02]
branch = conv1x1
branch = conv3x3
branch = conv1x4
branch = pool3x3 > conv1x1
residual = none

[inception-03]
branch = conv1x1
branch = conv1x1@half > conv3x3
branch = conv1x1@half > conv3x3 > conv3x3
branch = conv1x4
residual = none

[inception-04]
branch = conv1x1
branch = conv1x1@half > conv3x3
branch = conv1x1@half > conv1x4
branch = pool3x3 > conv1x1
residual = proj1x1
)";

std::map<std::string, VariantSpec>& variant_table() {
  static std::map<std::string, VariantSpec> table;
  return table;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

BranchStep parse_step(const std::string& tok_in) {
  std::string tok = trim(tok_in);
  BranchStep step;
  if (tok.rfind("pool", 0) == 0) {
    step.op = BranchStep::Op::Pool;
    tok = tok.substr(4);
  } else if (tok.rfind("conv", 0) == 0) {
    step.op = BranchStep::Op::Conv;
    tok = tok.substr(4);
  } else {
    fail(Errc::BadFormat, "inception step must start with conv/pool: " + tok_in);
  }
  if (auto at = tok.find("@half"); at != std::string::npos) {
    step.half_width = true;
    tok = tok.substr(0, at);
  }
  const auto x = tok.find('x');
  if (x == std::string::npos) fail(Errc::BadFormat, "bad kernel size: " + tok_in);
  try {
    step.kh = std::stoi(tok.substr(0, x));
    step.kw = std::stoi(tok.substr(x + 1));
  } catch (...) {
    fail(Errc::BadFormat, "bad kernel size: " + tok_in);
  }
  require(step.kh >= 1 && step.kw >= 1, Errc::BadFormat, "bad kernel size: " + tok_in);
  return step;
}

void ensure_variants_loaded() {
  if (variant_table().empty()) parse_inception_variants(kDefaultVariants);
}

// Channel budget split across branches, remainder assigned round-robin.
std::vector<int> split_budget(int budget, int n_branches) {
  std::vector<int> out(n_branches, budget / n_branches);
  for (int i = 0; i < budget % n_branches; ++i) out[i] += 1;
  return out;
}

std::unique_ptr<Layer<float>> make_inception(const std::string& name, const VariantSpec& spec,
                                             int cin, int budget, std::mt19937& rng) {
  const auto widths = split_budget(budget, static_cast<int>(spec.branches.size()));
  std::vector<Inception<float>::Chain> chains;
  for (size_t b = 0; b < spec.branches.size(); ++b) {
    Inception<float>::Chain chain;
    int cur = cin;
    const auto& steps = spec.branches[b];
    // Which convs are "final" decides their width: the last conv in a branch
    // gets the branch budget, reductions get half of it.
    for (size_t s = 0; s < steps.size(); ++s) {
      const auto& st = steps[s];
      const std::string lname =
          name + ".br" + std::to_string(b) + ".s" + std::to_string(s);
      if (st.op == BranchStep::Op::Pool) {
        chain.push_back(std::make_unique<MaxPool2d<float>>(st.kh, st.kw, 1, 1, true));
        continue;
      }
      const bool last = s + 1 == steps.size();
      const int cout = last ? widths[b] : std::max(st.half_width ? widths[b] / 2 : widths[b], 1);
      auto conv = std::make_unique<Conv2d<float>>(lname, st.kh, st.kw, cur, cout);
      conv->init_he(rng);
      cur = cout;
      chain.push_back(std::move(conv));
      if (!last) chain.push_back(std::make_unique<ReLU<float>>());
    }
    require(!chain.empty(), Errc::BadFormat, "empty inception branch");
    chains.push_back(std::move(chain));
  }
  std::unique_ptr<Conv2d<float>> proj;
  if (spec.residual) {
    proj = std::make_unique<Conv2d<float>>(name + ".proj", 1, 1, cin, budget);
    proj->init_he(rng);
  }
  return std::make_unique<Inception<float>>(std::move(chains), widths, std::move(proj));
}

}  // namespace

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Baseline: return "baseline";
    case ModelKind::Inception01: return "inception-01";
    case ModelKind::Inception02: return "inception-02";
    case ModelKind::Inception03: return "inception-03";
    case ModelKind::Inception04: return "inception-04";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  for (ModelKind k : {ModelKind::Baseline, ModelKind::Inception01, ModelKind::Inception02,
                      ModelKind::Inception03, ModelKind::Inception04})
    if (name == model_kind_name(k)) return k;
  fail(Errc::BadVariant, "unknown model '" + name + "'");
}

void parse_inception_variants(const std::string& text) {
  std::map<std::string, VariantSpec> table;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      table[section] = VariantSpec{};
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos && !section.empty(), Errc::BadFormat,
            "bad variant line: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "branch") {
      std::vector<BranchStep> steps;
      std::string rest = value;
      size_t pos;
      while ((pos = rest.find('>')) != std::string::npos) {
        steps.push_back(parse_step(rest.substr(0, pos)));
        rest = rest.substr(pos + 1);
      }
      steps.push_back(parse_step(rest));
      require(steps.back().op == BranchStep::Op::Conv, Errc::BadFormat,
              "branch must end in a conv: " + line);
      table[section].branches.push_back(std::move(steps));
    } else if (key == "residual") {
      require(value == "none" || value == "proj1x1", Errc::BadFormat,
              "residual must be none|proj1x1: " + line);
      table[section].residual = value == "proj1x1";
    } else {
      fail(Errc::BadFormat, "unknown variant key: " + key);
    }
  }
  for (const auto& [name, spec] : table)
    require(!spec.branches.empty(), Errc::BadFormat, "variant " + name + " has no branches");
  variant_table() = std::move(table);
}

void load_inception_variants(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  parse_inception_variants(ss.str());
}

VariantSpec inception_variant(ModelKind kind) {
  ensure_variants_loaded();
  auto it = variant_table().find(model_kind_name(kind));
  require(it != variant_table().end(), Errc::BadVariant,
          std::string("no variant table entry for ") + model_kind_name(kind));
  return it->second;
}

Model build_model(const ModelConfig& cfg, uint64_t seed) {
  require(cfg.n_classes == 3 || cfg.n_classes == 4, Errc::BadClassCount,
          "n_classes must be 3 or 4, got " + std::to_string(cfg.n_classes));

  Model m;
  m.cfg_ = cfg;
  std::mt19937 rng(static_cast<uint32_t>(nn::mix_seed(seed, 0x6d6f64656cULL)));
  auto& L = m.layers_;

  int cin = 1;
  for (int b = 0; b < 4; ++b) {
    const std::string prefix = "b" + std::to_string(b + 1);
    const int cout = cfg.block_channels[b];
    L.push_back(std::make_unique<BatchNorm<float>>(prefix + ".bn_a", cin));
    if (cfg.kind == ModelKind::Baseline) {
      auto conv = std::make_unique<Conv2d<float>>(prefix + ".conv", 3, 3, cin, cout);
      conv->init_he(rng);
      L.push_back(std::move(conv));
    } else {
      L.push_back(make_inception(prefix + ".inc", inception_variant(cfg.kind), cin, cout, rng));
    }
    L.push_back(std::make_unique<ReLU<float>>());
    L.push_back(std::make_unique<BatchNorm<float>>(prefix + ".bn_b", cout));
    if (b < 3)
      L.push_back(std::make_unique<MaxPool2d<float>>(2, 2, 2, 2, false));
    else
      L.push_back(std::make_unique<GlobalMaxPool<float>>());
    L.push_back(std::make_unique<Dropout<float>>(prefix + ".drop", cfg.block_dropout[b]));
    cin = cout;
  }

  auto fc1 = std::make_unique<Dense<float>>("head.fc1", cfg.block_channels[3], cfg.dense_width);
  fc1->init_he(rng);
  L.push_back(std::move(fc1));
  L.push_back(std::make_unique<ReLU<float>>());
  L.push_back(std::make_unique<Dropout<float>>("head.drop", cfg.head_dropout));
  auto fc2 = std::make_unique<Dense<float>>("head.fc2", cfg.dense_width, cfg.n_classes);
  fc2->init_he(rng);
  L.push_back(std::move(fc2));
  L.push_back(std::make_unique<Softmax<float>>());
  return m;
}

nn::Tensor<float> Model::forward(const nn::Tensor<float>& x, const nn::FwdCtx& ctx) {
  nn::Tensor<float> t = x;
  for (auto& layer : layers_) t = layer->forward(t, ctx);
  return t;
}

nn::Tensor<float> Model::forward_trace(const nn::Tensor<float>& x, const nn::FwdCtx& ctx,
                                       std::vector<std::vector<int>>* shapes) {
  nn::Tensor<float> t = x;
  for (auto& layer : layers_) {
    t = layer->forward(t, ctx);
    if (shapes) shapes->push_back(t.shape());
  }
  return t;
}

nn::Tensor<float> Model::backward(const nn::Tensor<float>& dy) {
  nn::Tensor<float> t = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) t = (*it)->backward(t);
  return t;
}

std::vector<nn::Parameter<float>*> Model::parameters() {
  std::vector<nn::Parameter<float>*> out;
  for (auto& layer : layers_) layer->collect_params(out);
  std::sort(out.begin(), out.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });
  for (size_t i = 1; i < out.size(); ++i)
    require(out[i]->name != out[i - 1]->name, Errc::ShapeMismatch,
            "duplicate parameter name " + out[i]->name);
  return out;
}

std::vector<std::pair<std::string, nn::Tensor<float>*>> Model::named_tensors() {
  std::vector<std::pair<std::string, nn::Tensor<float>*>> out;
  for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
  std::vector<std::pair<std::string, nn::Tensor<float>*>> state;
  for (auto& layer : layers_) layer->collect_state(state);
  out.insert(out.end(), state.begin(), state.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

int64_t Model::parameter_count() {
  int64_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

Model Model::clone() const {
  Model copy = build_model(cfg_, 0);
  auto src = const_cast<Model*>(this)->named_tensors();
  auto dst = copy.named_tensors();
  require(src.size() == dst.size(), Errc::ShapeMismatch, "clone tensor count");
  for (size_t i = 0; i < src.size(); ++i) {
    require(src[i].first == dst[i].first, Errc::ShapeMismatch, "clone tensor names");
    std::memcpy(dst[i].second->data(), src[i].second->data(),
                sizeof(float) * src[i].second->size());
  }
  return copy;
}

namespace {

void put_u16(std::ofstream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}
void put_u32(std::ofstream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}
uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot create " + tmp.string());
    out.write("RSPN", 4);
    put_u16(out, 1);
    out.put(static_cast<char>(model.config().kind));
    out.put(static_cast<char>(model.config().n_classes));
    for (auto& [name, tensor] : model.named_tensors()) {
      put_u16(out, static_cast<uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      out.put(static_cast<char>(tensor->rank()));
      for (int d : tensor->shape()) put_u32(out, static_cast<uint32_t>(d));
      for (int64_t i = 0; i < tensor->size(); ++i) {
        uint32_t bits;
        float v = (*tensor)[i];
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
      }
    }
    if (!out) fail(Errc::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RSPN", 4) != 0)
    fail(Errc::BadFormat, "bad checkpoint magic: " + path.string());
  const uint16_t version = get_u16(in);
  if (version != 1) fail(Errc::BadFormat, "unsupported checkpoint version");
  ModelConfig cfg;
  cfg.kind = static_cast<ModelKind>(in.get());
  cfg.n_classes = in.get();
  Model model = build_model(cfg, 0);

  auto tensors = model.named_tensors();
  std::map<std::string, nn::Tensor<float>*> by_name(tensors.begin(), tensors.end());
  size_t loaded = 0;
  while (true) {
    const int c0 = in.peek();
    if (c0 == EOF) break;
    const uint16_t name_len = get_u16(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int rank = in.get();
    std::vector<int> shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(in));
    auto it = by_name.find(name);
    if (it == by_name.end())
      fail(Errc::BadFormat, "unexpected tensor '" + name + "' in " + path.string());
    require(it->second->shape() == shape, Errc::BadFormat,
            "shape mismatch for '" + name + "' in " + path.string());
    for (int64_t i = 0; i < it->second->size(); ++i) {
      uint32_t bits = get_u32(in);
      float v;
      std::memcpy(&v, &bits, 4);
      (*it->second)[i] = v;
    }
    if (!in) fail(Errc::BadFormat, "truncated checkpoint: " + path.string());
    ++loaded;
  }
  require(loaded == tensors.size(), Errc::BadFormat,
          "checkpoint tensor count mismatch: " + path.string());
  return model;
}

}  // namespace respnet::models

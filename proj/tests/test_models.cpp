#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "respnet/error.hpp"
#include "respnet/model.hpp"

using namespace respnet;
using namespace respnet::models;

namespace {

nn::Tensor<float> random_input(int n, uint32_t seed) {
  nn::Tensor<float> x = nn::Tensor<float>::uninit({n, 124, 154, 1});
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  return x;
}

const std::vector<ModelKind> kAllKinds = {ModelKind::Baseline, ModelKind::Inception01,
                                          ModelKind::Inception02, ModelKind::Inception03,
                                          ModelKind::Inception04};

}  // namespace

TEST_CASE("every model kind emits finite probability rows for both class counts") {
  for (ModelKind kind : kAllKinds) {
    for (int c : {3, 4}) {
      ModelConfig cfg;
      cfg.kind = kind;
      cfg.n_classes = c;
      Model model = build_model(cfg, 11);
      auto y = model.forward(random_input(2, 5), {});
      REQUIRE(y.shape() == std::vector<int>{2, c});
      for (int r = 0; r < 2; ++r) {
        double sum = 0.0;
        for (int k = 0; k < c; ++k) {
          CHECK(std::isfinite(y[r * c + k]));
          CHECK(y[r * c + k] >= 0.0f);
          sum += y[r * c + k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("baseline spatial and channel chain matches the architecture table") {
  ModelConfig cfg;
  cfg.kind = ModelKind::Baseline;
  cfg.n_classes = 4;
  Model model = build_model(cfg, 1);
  std::vector<std::vector<int>> shapes;
  model.forward_trace(random_input(1, 2), {}, &shapes);

  // layer order per block: bn, conv, relu, bn, pool, dropout
  CHECK(shapes[1] == std::vector<int>{1, 124, 154, 64});   // block 1 conv
  CHECK(shapes[4] == std::vector<int>{1, 62, 77, 64});     // block 1 pool (table says 78; ceil gives 77)
  CHECK(shapes[7] == std::vector<int>{1, 62, 77, 128});    // block 2 conv
  CHECK(shapes[10] == std::vector<int>{1, 31, 39, 128});   // block 2 pool
  CHECK(shapes[16] == std::vector<int>{1, 16, 20, 256});   // block 3 pool
  CHECK(shapes[19] == std::vector<int>{1, 16, 20, 512});   // block 4 conv
  CHECK(shapes[22] == std::vector<int>{1, 512});           // global max pool
  CHECK(shapes[24] == std::vector<int>{1, 1024});          // dense
  CHECK(shapes.back() == std::vector<int>{1, 4});
}

TEST_CASE("bad class counts and unknown variants are rejected") {
  ModelConfig cfg;
  cfg.n_classes = 5;
  try {
    build_model(cfg, 1);
    FAIL("expected BadClassCount");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadClassCount);
  }
  CHECK_THROWS_AS(model_kind_from_name("inception-05"), Error);
}

TEST_CASE("inception variants keep the block channel budget and shape chain") {
  for (ModelKind kind : {ModelKind::Inception01, ModelKind::Inception02,
                         ModelKind::Inception03, ModelKind::Inception04}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.n_classes = 4;
    Model model = build_model(cfg, 3);
    std::vector<std::vector<int>> shapes;
    model.forward_trace(random_input(1, 4), {}, &shapes);
    CHECK(shapes[1] == std::vector<int>{1, 124, 154, 64});
    CHECK(shapes[7] == std::vector<int>{1, 62, 77, 128});
    CHECK(shapes[13] == std::vector<int>{1, 31, 39, 256});
    CHECK(shapes[19] == std::vector<int>{1, 16, 20, 512});
    CHECK(shapes[22] == std::vector<int>{1, 512});
  }
}

TEST_CASE("inception-04 carries a residual projection, 01 does not") {
  ModelConfig cfg;
  cfg.n_classes = 4;
  cfg.kind = ModelKind::Inception04;
  Model with_skip = build_model(cfg, 1);
  bool has_proj = false;
  for (auto* p : with_skip.parameters()) has_proj |= p->name.find(".proj.") != std::string::npos;
  CHECK(has_proj);

  cfg.kind = ModelKind::Inception01;
  Model without = build_model(cfg, 1);
  for (auto* p : without.parameters()) CHECK(p->name.find(".proj.") == std::string::npos);
}

namespace {

// Expected parameter totals computed straight from the branch tables.
int64_t expected_block_params(ModelKind kind, int cin, int budget) {
  const int b = budget / 4;
  const int r = b / 2;
  int64_t w = 0, bias = 0;
  if (kind == ModelKind::Inception01 || kind == ModelKind::Inception04) {
    w = static_cast<int64_t>(cin) * b            // 1x1
        + cin * r + 9LL * r * b                  // 1x1@half > 3x3
        + cin * r + 4LL * r * b                  // 1x1@half > 1x4
        + static_cast<int64_t>(cin) * b;         // pool > 1x1
    bias = b + (r + b) + (r + b) + b;
    if (kind == ModelKind::Inception04) {
      w += static_cast<int64_t>(cin) * budget;  // residual projection
      bias += budget;
    }
  } else if (kind == ModelKind::Inception02) {
    w = static_cast<int64_t>(cin) * b + 9LL * cin * b + 4LL * cin * b +
        static_cast<int64_t>(cin) * b;
    bias = 4LL * b;
  } else {
    FAIL("unsupported kind in oracle");
  }
  return w + bias;
}

int64_t expected_model_params(ModelKind kind, int n_classes) {
  const int channels[5] = {1, 64, 128, 256, 512};
  int64_t total = 0;
  for (int blk = 0; blk < 4; ++blk) {
    const int cin = channels[blk], cout = channels[blk + 1];
    total += 2LL * cin + 2LL * cout;  // two batchnorms
    total += expected_block_params(kind, cin, cout);
  }
  total += 512LL * 1024 + 1024;               // fc1
  total += 1024LL * n_classes + n_classes;    // fc2
  return total;
}

}  // namespace

TEST_CASE("parameter counts match the analytic oracle; 02 outweighs 01") {
  ModelConfig cfg;
  cfg.n_classes = 4;

  cfg.kind = ModelKind::Inception01;
  Model m1 = build_model(cfg, 1);
  CHECK(m1.parameter_count() == expected_model_params(ModelKind::Inception01, 4));

  cfg.kind = ModelKind::Inception02;
  Model m2 = build_model(cfg, 1);
  CHECK(m2.parameter_count() == expected_model_params(ModelKind::Inception02, 4));

  CHECK(m2.parameter_count() > m1.parameter_count());
}

TEST_CASE("list_parameters is name-sorted, unique, and covers the table") {
  ModelConfig cfg;
  cfg.kind = ModelKind::Baseline;
  cfg.n_classes = 4;
  Model model = build_model(cfg, 1);
  auto params = model.parameters();
  std::set<std::string> names;
  for (size_t i = 0; i < params.size(); ++i) {
    names.insert(params[i]->name);
    if (i > 0) CHECK(params[i - 1]->name < params[i]->name);
  }
  CHECK(names.size() == params.size());
  for (const char* expected :
       {"b1.bn_a.gamma", "b1.conv.w", "b1.bn_b.beta", "b2.conv.w", "b3.conv.b", "b4.conv.w",
        "head.fc1.w", "head.fc1.b", "head.fc2.w"})
    CHECK(names.count(expected) == 1);
}

TEST_CASE("identical seeds build identical models; different seeds differ") {
  ModelConfig cfg;
  cfg.kind = ModelKind::Inception03;
  cfg.n_classes = 3;
  Model a = build_model(cfg, 77);
  Model b = build_model(cfg, 77);
  Model c = build_model(cfg, 78);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->name == pb[i]->name);
    for (int64_t j = 0; j < pa[i]->value.size(); ++j) {
      CHECK(pa[i]->value[j] == pb[i]->value[j]);
      any_diff |= pa[i]->value[j] != pc[i]->value[j];
    }
  }
  CHECK(any_diff);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  ModelConfig cfg;
  cfg.kind = ModelKind::Inception04;
  cfg.n_classes = 3;
  Model model = build_model(cfg, 9);
  // run one train-mode forward so running stats move away from init
  model.forward(random_input(2, 6), nn::FwdCtx{nn::Mode::Train, 1, 1});

  const auto path = fs::temp_directory_path() / "respnet_ckpt_test.rspn";
  save_checkpoint(model, path);
  Model loaded = load_checkpoint(path);
  CHECK(loaded.config().kind == cfg.kind);
  CHECK(loaded.config().n_classes == 3);

  auto src = model.named_tensors();
  auto dst = loaded.named_tensors();
  REQUIRE(src.size() == dst.size());
  for (size_t i = 0; i < src.size(); ++i) {
    CHECK(src[i].first == dst[i].first);
    REQUIRE(src[i].second->size() == dst[i].second->size());
    for (int64_t j = 0; j < src[i].second->size(); ++j)
      CHECK((*src[i].second)[j] == (*dst[i].second)[j]);
  }
  fs::remove(path);
}

TEST_CASE("baseline and inception variants share the same head shapes") {
  ModelConfig cfg;
  cfg.n_classes = 4;
  cfg.kind = ModelKind::Baseline;
  Model base = build_model(cfg, 1);
  cfg.kind = ModelKind::Inception02;
  Model inc = build_model(cfg, 1);
  auto find = [](Model& m, const std::string& name) -> nn::Parameter<float>* {
    for (auto* p : m.parameters())
      if (p->name == name) return p;
    return nullptr;
  };
  for (const char* name : {"head.fc1.w", "head.fc1.b", "head.fc2.w", "head.fc2.b"}) {
    auto* a = find(base, name);
    auto* b = find(inc, name);
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(a->value.shape() == b->value.shape());
  }
}

TEST_CASE("the variant table can be replaced and restored") {
  parse_inception_variants(R"(
[inception-01]
branch = conv1x1
branch = conv1x4
residual = none
[inception-02]
branch = conv1x1
branch = conv3x3
residual = none
[inception-03]
branch = conv1x1
residual = none
[inception-04]
branch = conv1x1
residual = proj1x1
)");
  CHECK(inception_variant(ModelKind::Inception01).branches.size() == 2);
  ModelConfig cfg;
  cfg.kind = ModelKind::Inception01;
  cfg.n_classes = 4;
  Model small = build_model(cfg, 1);
  auto y = small.forward(random_input(1, 7), {});
  CHECK(y.shape() == std::vector<int>{1, 4});

  CHECK_THROWS_AS(parse_inception_variants("branch = conv1x1"), Error);  // no section

  // restore defaults for any later tests
  parse_inception_variants(R"(
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
)");
}

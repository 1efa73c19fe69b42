#include "respnet/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "respnet/layers.hpp"

namespace respnet::nn {
namespace {

using DTensor = Tensor<double>;

void fill_uniform(std::mt19937& rng, DTensor& t, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

// Values with pairwise gaps well above 2h, for max-based layers.
void fill_distinct(std::mt19937& rng, DTensor& t) {
  std::vector<int> levels(t.size());
  for (size_t i = 0; i < levels.size(); ++i) levels[i] = static_cast<int>(i);
  for (int i = static_cast<int>(levels.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<uint32_t>(i + 1));
    std::swap(levels[i], levels[j]);
  }
  std::uniform_real_distribution<double> jitter(-1e-4, 1e-4);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = levels[i] * 0.05 + jitter(rng);
}

// Keep ReLU inputs away from the kink so finite differences stay one-sided.
void nudge_from_zero(DTensor& t, double margin = 5e-3) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i]) < margin) t[i] += t[i] >= 0 ? margin : -margin;
}

double rel_err(const double* a, const double* f, int64_t n) {
  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(f[i]), 1e-2});
    worst = std::max(worst, std::abs(a[i] - f[i]) / denom);
  }
  return worst;
}

// Scalar loss = sum(w .* out) with fixed random weights; returns the worst
// relative error between analytic and central finite-difference gradients
// over the input and every parameter tensor.
double check_layer(Layer<double>& layer, DTensor& x, std::mt19937& rng, const FwdCtx& ctx) {
  constexpr double h = 1e-3;
  DTensor probe;
  {
    DTensor out = layer.forward(x, ctx);
    probe = DTensor(out.shape());
    fill_uniform(rng, probe);
  }
  auto loss = [&]() {
    DTensor out = layer.forward(x, ctx);
    double acc = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
    return acc;
  };

  // Analytic pass.
  std::vector<Parameter<double>*> params;
  layer.collect_params(params);
  for (auto* p : params) p->value.zero_grad();
  loss();  // forward to populate caches
  DTensor dx = layer.backward(probe);

  double worst = 0.0;
  std::vector<DTensor*> targets{&x};
  std::vector<const double*> analytic{dx.data()};
  for (auto* p : params) {
    targets.push_back(&p->value);
    analytic.push_back(p->value.grad());
  }

  for (size_t t = 0; t < targets.size(); ++t) {
    DTensor& tensor = *targets[t];
    std::vector<double> fd(tensor.size());
    for (int64_t i = 0; i < tensor.size(); ++i) {
      const double keep = tensor[i];
      tensor[i] = keep + h;
      const double lp = loss();
      tensor[i] = keep - h;
      const double lm = loss();
      tensor[i] = keep;
      fd[i] = (lp - lm) / (2.0 * h);
    }
    worst = std::max(worst, rel_err(analytic[t], fd.data(), tensor.size()));
  }
  return worst;
}

double case_conv2d(std::mt19937& rng) {
  Conv2d<double> conv("c", 3, 3, 2, 3);
  fill_uniform(rng, conv.weight().value, -0.5, 0.5);
  fill_uniform(rng, conv.bias().value, -0.2, 0.2);
  DTensor x({1, 5, 5, 2});
  fill_uniform(rng, x);
  return check_layer(conv, x, rng, {});
}

double case_batchnorm(std::mt19937& rng) {
  BatchNorm<double> bn("b", 3);
  fill_uniform(rng, bn.gamma().value, 0.5, 1.5);
  fill_uniform(rng, bn.beta().value, -0.5, 0.5);
  DTensor x({2, 3, 4, 3});
  fill_uniform(rng, x);
  FwdCtx ctx{Mode::Train, 0, 0};
  return check_layer(bn, x, rng, ctx);
}

double case_relu(std::mt19937& rng) {
  ReLU<double> relu;
  DTensor x({4, 25});
  fill_uniform(rng, x);
  nudge_from_zero(x);
  return check_layer(relu, x, rng, {});
}

double case_maxpool(std::mt19937& rng) {
  MaxPool2d<double> pool(2, 2, 2, 2, false);
  DTensor x({1, 5, 7, 3});
  fill_distinct(rng, x);
  return check_layer(pool, x, rng, {});
}

double case_global_maxpool(std::mt19937& rng) {
  GlobalMaxPool<double> pool;
  DTensor x({2, 3, 4, 5});
  fill_distinct(rng, x);
  return check_layer(pool, x, rng, {});
}

double case_dense(std::mt19937& rng) {
  Dense<double> dense("d", 6, 4);
  fill_uniform(rng, dense.weight().value, -0.5, 0.5);
  fill_uniform(rng, dense.bias().value, -0.2, 0.2);
  DTensor x({3, 6});
  fill_uniform(rng, x);
  return check_layer(dense, x, rng, {});
}

// Softmax feeding the KL divergence, differentiated back to the logits.
double case_softmax_kl(std::mt19937& rng) {
  constexpr double h = 1e-3;
  const int n = 5, c = 4;
  DTensor z({n, c});
  fill_uniform(rng, z, -2.0, 2.0);
  DTensor y({n, c});
  fill_uniform(rng, y, 0.1, 1.0);
  for (int r = 0; r < n; ++r) {
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += y[r * c + k];
    for (int k = 0; k < c; ++k) y[r * c + k] /= sum;
  }

  Softmax<double> softmax;
  auto loss = [&]() {
    DTensor p = softmax.forward(z, {});
    return static_cast<double>(kl_divergence<double>(y, p, nullptr));
  };

  DTensor p = softmax.forward(z, {});
  DTensor dpred;
  kl_divergence(y, p, &dpred);
  DTensor dz = softmax.backward(dpred);

  std::vector<double> fd(z.size());
  for (int64_t i = 0; i < z.size(); ++i) {
    const double keep = z[i];
    z[i] = keep + h;
    const double lp = loss();
    z[i] = keep - h;
    const double lm = loss();
    z[i] = keep;
    fd[i] = (lp - lm) / (2.0 * h);
  }
  return rel_err(dz.data(), fd.data(), z.size());
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck(int n_seeds, double tol) {
  struct Entry {
    const char* name;
    double (*fn)(std::mt19937&);
  };
  const Entry entries[] = {
      {"conv2d", case_conv2d},
      {"batchnorm", case_batchnorm},
      {"relu", case_relu},
      {"maxpool2d", case_maxpool},
      {"global_maxpool", case_global_maxpool},
      {"dense", case_dense},
      {"softmax_kl", case_softmax_kl},
  };

  std::vector<GradCheckCase> out;
  for (const auto& entry : entries) {
    GradCheckCase result;
    result.layer = entry.name;
    for (int seed = 0; seed < n_seeds; ++seed) {
      std::mt19937 rng(0xC0FFEE + 977 * seed);
      result.max_rel_err = std::max(result.max_rel_err, entry.fn(rng));
    }
    result.pass = result.max_rel_err < tol;
    out.push_back(result);
  }
  return out;
}

}  // namespace respnet::nn

#pragma once

#include <cstring>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "blockmerge/pareto.hpp"
#include "blockmerge/tensor_store.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() / ("bm_" + tag + "_" + std::to_string(rng()));
  fs::create_directories(dir);
  return dir;
}

// emb, L layers of (attn [3,3], mlp [2,3]), then norm and head.
inline blockmerge::TensorMap fixture_model(int layers, std::uint64_t seed, bool boundary = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  blockmerge::TensorMap m;
  auto add = [&](const std::string& name, std::vector<std::uint64_t> shape) {
    std::uint64_t count = 1;
    for (auto s : shape) count *= s;
    std::vector<float> data(count);
    for (auto& v : data) v = n(rng);
    m.add({name, std::move(shape), std::move(data)});
  };
  if (boundary) add("embed.weight", {4, 3});
  for (int l = 0; l < layers; ++l) {
    add("layers." + std::to_string(l) + ".attn.w", {3, 3});
    add("layers." + std::to_string(l) + ".mlp.w", {2, 3});
  }
  if (boundary) {
    add("norm.weight", {3});
    add("head.weight", {3, 4});
  }
  m.metadata()["seed"] = std::to_string(seed);
  return m;
}

inline bool bit_equal(const blockmerge::TensorMap& a, const blockmerge::TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i];
    const auto& y = b.entries()[i];
    if (x.name != y.name || x.shape != y.shape || x.data.size() != y.data.size()) return false;
    if (!std::equal(x.data.begin(), x.data.end(), y.data.begin(), [](float p, float q) {
          return std::memcmp(&p, &q, sizeof(float)) == 0;
        })) {
      return false;
    }
  }
  return true;
}

namespace oracle {

// Two-pass sum of squared deviations.
inline double sse(const std::vector<double>& d, int i, int j) {
  double mean = 0.0;
  for (int l = i; l <= j; ++l) mean += d[static_cast<std::size_t>(l)];
  mean /= static_cast<double>(j - i + 1);
  double s = 0.0;
  for (int l = i; l <= j; ++l) s += (d[static_cast<std::size_t>(l)] - mean) * (d[static_cast<std::size_t>(l)] - mean);
  return s;
}

// Brute-force 2D hypervolume by Monte Carlo over the bounding box.
struct McVolume {
  double value;
  double standard_error;
};

inline McVolume mc_hypervolume(const std::vector<blockmerge::Point>& pts, const blockmerge::Point& ref,
                               std::size_t samples, std::uint64_t seed) {
  const std::size_t K = ref.size();
  blockmerge::Point hi(ref);
  for (const auto& p : pts) {
    for (std::size_t k = 0; k < K; ++k) hi[k] = std::max(hi[k], p[k]);
  }
  double box = 1.0;
  for (std::size_t k = 0; k < K; ++k) box *= hi[k] - ref[k];
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t hits = 0;
  blockmerge::Point z(K);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < K; ++k) z[k] = ref[k] + u(rng) * (hi[k] - ref[k]);
    for (const auto& p : pts) {
      bool dom = true;
      for (std::size_t k = 0; k < K && dom; ++k) dom = p[k] >= z[k];
      if (dom) {
        ++hits;
        break;
      }
    }
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(samples);
  return {box * frac, box * std::sqrt(frac * (1.0 - frac) / static_cast<double>(samples))};
}

// E[HVI] for one candidate with independent normal objectives, K = 2, by
// Gauss-Legendre quadrature over a +-8 sigma box.
inline double ehvi_quadrature(double m0, double s0, double m1, double s1,
                              const std::vector<blockmerge::Point>& front, const blockmerge::Point& ref) {
  const int n = 16;
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  auto hv = [&](const std::vector<blockmerge::Point>& pts) {
    // staircase sweep with dominated points allowed
    std::vector<blockmerge::Point> p;
    for (const auto& q : pts) {
      if (q[0] > ref[0] && q[1] > ref[1]) p.push_back(q);
    }
    std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a[0] > b[0]; });
    double area = 0.0, top = ref[1];
    for (const auto& q : p) {
      if (q[1] > top) {
        area += (q[0] - ref[0]) * (q[1] - top);
        top = q[1];
      }
    }
    return area;
  };
  const double base = hv(front);
  // split each axis into panels for accuracy around the kinks
  const int panels = 32;
  const double span = 8.0;
  double total = 0.0;
  for (int a = 0; a < panels; ++a) {
    const double za = -span + 2.0 * span * a / panels;
    const double zb = za + 2.0 * span / panels;
    for (int i = 0; i < n; ++i) {
      const double z0 = 0.5 * (zb - za) * x[static_cast<std::size_t>(i)] + 0.5 * (za + zb);
      const double w0 = 0.5 * (zb - za) * w[static_cast<std::size_t>(i)] * std::exp(-0.5 * z0 * z0) / std::sqrt(2 * M_PI);
      for (int b = 0; b < panels; ++b) {
        const double ya = -span + 2.0 * span * b / panels;
        const double yb = ya + 2.0 * span / panels;
        for (int j = 0; j < n; ++j) {
          const double z1 = 0.5 * (yb - ya) * x[static_cast<std::size_t>(j)] + 0.5 * (ya + yb);
          const double w1 = 0.5 * (yb - ya) * w[static_cast<std::size_t>(j)] * std::exp(-0.5 * z1 * z1) / std::sqrt(2 * M_PI);
          auto pts = front;
          pts.push_back({m0 + s0 * z0, m1 + s1 * z1});
          total += w0 * w1 * (hv(pts) - base);
        }
      }
    }
  }
  return total;
}

// Largest local discrepancy over anchored boxes [0, t) with corners on the
// point grid (plus 1). Exact for the closed/open box family in d = 2.
inline double star_discrepancy_2d(const std::vector<std::pair<double, double>>& pts) {
  std::vector<double> xs{1.0}, ys{1.0};
  for (const auto& p : pts) {
    xs.push_back(p.first);
    ys.push_back(p.second);
  }
  const double n = static_cast<double>(pts.size());
  double worst = 0.0;
  for (double tx : xs) {
    for (double ty : ys) {
      std::size_t open = 0, closed = 0;
      for (const auto& p : pts) {
        if (p.first < tx && p.second < ty) ++open;
        if (p.first <= tx && p.second <= ty) ++closed;
      }
      const double vol = tx * ty;
      worst = std::max({worst, vol - static_cast<double>(open) / n, static_cast<double>(closed) / n - vol});
    }
  }
  return worst;
}

}  // namespace oracle
}  // namespace testing

#pragma once

// Shared fixtures and independent reference implementations for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "dqa/bfen/config.hpp"
#include "dqa/corpus.hpp"
#include "dqa/image.hpp"
#include "dqa/subjective.hpp"

namespace dqa::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dqa") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Smooth gradient plus noise; `level` in [0,1] scales the noise, so it can carry a label.
inline Image make_image(int height, int width, std::uint64_t seed, double level = 0.5) {
  Image img;
  img.height = height;
  img.width = width;
  img.pixels.resize(static_cast<std::size_t>(height) * width * 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  const double phase = static_cast<double>(seed % 97) / 97.0 * 6.28;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double base = 128.0 + 60.0 * std::sin(0.2 * x + phase + c) * std::cos(0.15 * y - phase);
        const double v = base + 90.0 * level * noise(rng);
        img.pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

struct CorpusSpec {
  int items = 12;
  std::vector<std::string> algorithms{"alg_a", "alg_b"};
  int height = 36;
  int width = 40;
  bool labeled = true;
  std::uint64_t seed = 1;
};

// MOS label of a synthetic sample: deterministic, spread over (10, 90).
inline double synthetic_mos(int item, int algorithm, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(item) * 31 + algorithm);
  return 10.0 + 80.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Writes images plus a manifest; returns the manifest path.
inline fs::path write_corpus(const fs::path& dir, const CorpusSpec& spec = {}) {
  fs::create_directories(dir / "img");
  std::vector<RainItem> items;
  for (int i = 0; i < spec.items; ++i) {
    RainItem item;
    item.item_id = "item" + std::to_string(i);
    item.rain_image = dir / "img" / (item.item_id + "_rain.png");
    save_image(item.rain_image, make_image(spec.height, spec.width, spec.seed * 7919 + i, 0.9));
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
      const double m = synthetic_mos(i, static_cast<int>(a), spec.seed);
      const fs::path p = dir / "img" / (item.item_id + "_" + spec.algorithms[a] + ".png");
      save_image(p, make_image(spec.height, spec.width, spec.seed * 7919 + i, 1.0 - m / 100.0));
      item.derained[spec.algorithms[a]] = p;
      if (spec.labeled) item.mos[spec.algorithms[a]] = m;
    }
    items.push_back(std::move(item));
  }
  const fs::path manifest = dir / "manifest.tsv";
  save_manifest(Corpus(spec.algorithms, std::move(items)), manifest);
  return manifest;
}

// Integer-valued draws, so ties are common.
inline std::vector<double> tied_vector(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> d(0, levels - 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// ---- metric oracles, all O(n^2) ----

inline double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Rank = 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return oracle_pearson(oracle_ranks(x), oracle_ranks(y));
}

inline double oracle_kendall_b(const std::vector<double>& x, const std::vector<double>& y) {
  double concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        tie_x += 1;
      } else if (dy == 0) {
        tie_y += 1;
      } else if ((dx > 0) == (dy > 0)) {
        concordant += 1;
      } else {
        discordant += 1;
      }
    }
  }
  return (concordant - discordant) / std::sqrt((concordant + discordant + tie_x) * (concordant + discordant + tie_y));
}

// Fraction of pairs with |gt gap| > T whose predictions strictly agree in order; nullopt if no pair qualifies.
inline std::optional<double> oracle_sa(const std::vector<double>& pred, const std::vector<double>& gt, double t) {
  double total = 0, right = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (i == j || !(gt[i] - gt[j] > t)) continue;
      total += 1;
      if (pred[i] > pred[j]) right += 1;
    }
  }
  if (total == 0) return std::nullopt;
  return right / total;
}

// ---- statistics oracles ----

// One-sided paired t decision using Boost's Student t distribution.
inline int oracle_paired_t(const std::vector<double>& a, const std::vector<double>& b, double confidence) {
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double alpha = 1.0 - confidence;
  if (sd == 0.0) return mean > 0 ? 1 : (mean < 0 ? -1 : 0);
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  if (boost::math::cdf(boost::math::complement(dist, t)) < alpha) return 1;
  if (boost::math::cdf(dist, t) < alpha) return -1;
  return 0;
}

// Straight transcription of the beta2 screening procedure on present scores.
inline std::vector<std::string> oracle_rejected(const RawScoreTable& raw) {
  const std::size_t ns = raw.subjects.size(), ni = raw.items.size();
  std::vector<double> above(ns, 0), below(ns, 0), rated(ns, 0);
  for (std::size_t j = 0; j < ni; ++j) {
    std::vector<std::size_t> who;
    std::vector<double> v;
    for (std::size_t i = 0; i < ns; ++i) {
      if (raw.scores[i][j]) {
        who.push_back(i);
        v.push_back(*raw.scores[i][j]);
      }
    }
    for (std::size_t i : who) rated[i] += 1;
    if (v.size() < 2) continue;
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double s : v) mean += s;
    mean /= n;
    double m2 = 0, m4 = 0, ss = 0;
    for (double s : v) {
      m2 += std::pow(s - mean, 2) / n;
      m4 += std::pow(s - mean, 4) / n;
      ss += std::pow(s - mean, 2);
    }
    const double sd = std::sqrt(ss / (n - 1));
    const double beta2 = m2 > 0 ? m4 / (m2 * m2) : 0.0;
    const double k = (beta2 >= 2 && beta2 <= 4) ? 2.0 : std::sqrt(20.0);
    for (std::size_t q = 0; q < who.size(); ++q) {
      if (v[q] > mean + k * sd) above[who[q]] += 1;
      if (v[q] < mean - k * sd) below[who[q]] += 1;
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ns; ++i) {
    const double pq = above[i] + below[i];
    if (rated[i] > 0 && pq / rated[i] > 0.05 && std::abs(above[i] - below[i]) / pq < 0.3) out.push_back(raw.subjects[i]);
  }
  return out;
}

// ---- complexity oracle, walking the architecture from its description ----

struct HandCount {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t spatial_conv_flops = 0;
};

inline HandCount hand_count(const bfen::ModelConfig& c, int height, int width) {
  HandCount h;
  auto conv = [&](std::uint64_t k, std::uint64_t cin, std::uint64_t cout, std::uint64_t hw) {
    h.params += k * k * cin * cout + cout;
    const std::uint64_t f = 2 * k * k * cin * cout * hw;
    h.flops += f;
    h.spatial_conv_flops += f;
  };
  auto other = [&](std::uint64_t n) { h.flops += n; };
  std::uint64_t hh = height / 2, ww = width / 2;
  conv(7, 3, c.stem_channels, hh * ww);
  other(static_cast<std::uint64_t>(c.stem_channels) * hh * ww);  // relu
  hh /= 2;
  ww /= 2;
  other(static_cast<std::uint64_t>(c.stem_channels) * hh * ww);  // max pool
  std::uint64_t in = c.stem_channels;
  std::vector<std::uint64_t> area;
  for (int b = 0; b < 4; ++b) {
    const std::uint64_t hw = hh * ww;
    area.push_back(hw);
    const std::uint64_t g = c.growth_rates[b], bw = static_cast<std::uint64_t>(c.bottleneck_factor) * g;
    std::uint64_t width_now = in;
    for (int l = 0; l < c.db_layers[b]; ++l) {
      conv(1, width_now, bw, hw);
      other(bw * hw);
      conv(3, bw, g, hw);
      other(g * hw);
      width_now += g;
    }
    conv(1, width_now, c.db_channels[b], hw);
    other(c.db_channels[b] * hw);
    in = c.db_channels[b];
    if (b < 3) {
      hh /= 2;
      ww /= 2;
      other(in * hh * ww);  // avg pool
    }
  }
  const std::uint64_t C = c.backward_channels;
  for (int i = 0; i < 4; ++i) {
    conv(1, c.db_channels[i], C, area[i]);
    other(C * area[i]);
  }
  for (int to = 0; to < 4; ++to) {
    for (int from = to + 1; from < 4; ++from) {
      const std::uint64_t k = 2ULL << (from - to);  // kernel = 2 * stride
      h.params += k * k * C * C + C;
      const std::uint64_t f = 2 * k * k * C * C * area[from];
      h.flops += f;
      h.spatial_conv_flops += f;
      other(C * area[to]);  // sum into the finer map
    }
  }
  std::uint64_t cells = 0;
  for (int g : c.spp_grids) cells += static_cast<std::uint64_t>(g) * g;
  const std::uint64_t D = C * cells;
  for (int i = 0; i < 4; ++i) {
    other(D);                      // spp
    h.params += C * C + C;         // gate
    h.flops += 2 * C * C * cells;  // gate matmul
    other(D);                      // sigmoid
    other(D);                      // W * Y
  }
  h.params += 4 + 1;
  h.flops += 2 * 4 * D;
  other(D);
  std::uint64_t prev = D;
  for (int k = 0; k < 3; ++k) {
    const std::uint64_t out = c.fc_dims[k];
    h.params += prev * out + out;
    h.flops += 2 * prev * out;
    other(out);
    prev = out;
  }
  return h;
}

}  // namespace dqa::testing

// Copyright 2026 The itersynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "itersynth/corpus.hpp"
#include "itersynth/detail/fs.hpp"
#include "itersynth/detail/rng.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/engine.hpp"
#include "itersynth/error.hpp"

namespace itersynth::analysis {

struct CurvePoint {
  std::size_t n = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t replicates = 0;

  bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
  std::string label;
  std::vector<CurvePoint> points;
};

inline void validate(const LearningCurve& c) {
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    if (!(c.points[i].standard_error >= 0.0)) {
      throw ValidationError("learning curve '" + c.label + "' has a negative standard error");
    }
    if (i > 0 && c.points[i].n <= c.points[i - 1].n) {
      throw ValidationError("learning curve '" + c.label + "' sizes are not strictly increasing");
    }
  }
}

/// N(τ) = smallest measured n with mean ≥ τ; no interpolation.
inline std::optional<std::size_t> sample_complexity(const LearningCurve& c, double tau) {
  for (const auto& p : c.points) {
    if (p.mean >= tau) return p.n;
  }
  return std::nullopt;
}

// ---- winrate ----------------------------------------------------------------

struct WinrateMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<int>> wins;         // wins[i][j]: i beat j
  std::vector<std::vector<int>> comparisons;  // (dataset, n) pairs compared
  double alpha = 1.0;

  double rate(std::size_t i, std::size_t j) const {
    return comparisons[i][j] == 0 ? 0.0
                                  : static_cast<double>(wins[i][j]) / comparisons[i][j];
  }

  // Mean over other rows of the normalized rate; lower is better.
  std::vector<double> column_means() const {
    const std::size_t k = labels.size();
    std::vector<double> out(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      double sum = 0.0;
      int cnt = 0;
      for (std::size_t i = 0; i < k; ++i) {
        if (i == j || comparisons[i][j] == 0) continue;
        sum += rate(i, j);
        ++cnt;
      }
      out[j] = cnt ? sum / cnt : 0.0;
    }
    return out;
  }
};

/// `curves` maps dataset name → one curve per algorithm; within a dataset all
/// curves must share the n grid.
inline WinrateMatrix winrate(const std::map<std::string, std::vector<LearningCurve>>& curves,
                             double alpha = 1.0) {
  if (!(alpha >= 0.0)) throw ValidationError("winrate alpha must be >= 0");
  WinrateMatrix w;
  w.alpha = alpha;
  std::map<std::string, std::size_t> index;
  for (const auto& [ds, cs] : curves) {
    for (const auto& c : cs) {
      if (!index.count(c.label)) {
        index.emplace(c.label, w.labels.size());
        w.labels.push_back(c.label);
      }
    }
  }
  const std::size_t k = w.labels.size();
  w.wins.assign(k, std::vector<int>(k, 0));
  w.comparisons.assign(k, std::vector<int>(k, 0));
  for (const auto& [ds, cs] : curves) {
    std::set<std::string> seen;
    for (const auto& c : cs) {
      validate(c);
      if (!seen.insert(c.label).second) {
        throw ValidationError("dataset '" + ds + "' lists algorithm '" + c.label + "' twice");
      }
      if (c.points.size() != cs.front().points.size()) {
        throw ValidationError("dataset '" + ds + "' curves have mismatched n grids");
      }
      for (std::size_t p = 0; p < c.points.size(); ++p) {
        if (c.points[p].n != cs.front().points[p].n) {
          throw ValidationError("dataset '" + ds + "' curves have mismatched n grids");
        }
      }
    }
    for (const auto& a : cs) {
      for (const auto& b : cs) {
        if (&a == &b) continue;
        const auto i = index.at(a.label), j = index.at(b.label);
        for (std::size_t p = 0; p < a.points.size(); ++p) {
          const auto& pa = a.points[p];
          const auto& pb = b.points[p];
          ++w.comparisons[i][j];
          if (pa.mean - alpha * pa.standard_error > pb.mean + alpha * pb.standard_error) {
            ++w.wins[i][j];
          }
        }
      }
    }
  }
  return w;
}

// ---- spearman ---------------------------------------------------------------

/// 1-based ranks; tied values share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw DegenerateInputError("correlation is undefined for a constant input vector");
  }
  return sab / std::sqrt(saa * sbb);
}

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

enum class PValueMethod { kTApproximation, kExactPermutation };

inline double spearman_t_pvalue(double rho, std::size_t n) {
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

inline Correlation spearman(const std::vector<double>& xs, const std::vector<double>& ys,
                            PValueMethod method = PValueMethod::kTApproximation) {
  if (xs.size() != ys.size()) throw ValidationError("spearman inputs differ in length");
  if (xs.size() < 3) throw ValidationError("spearman needs at least 3 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  Correlation c;
  c.n = xs.size();
  c.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
  if (method == PValueMethod::kTApproximation) {
    c.p_value = spearman_t_pvalue(c.rho, c.n);
    return c;
  }
  if (c.n > 10) throw ValidationError("exact permutation p-values are limited to n <= 10");
  std::vector<std::size_t> perm(c.n);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t total = 0, extreme = 0;
  std::vector<double> shuffled(c.n);
  do {
    for (std::size_t i = 0; i < c.n; ++i) shuffled[i] = ry[perm[i]];
    ++total;
    if (std::abs(pearson(rx, shuffled)) >= std::abs(c.rho) - 1e-12) ++extreme;
  } while (std::next_permutation(perm.begin(), perm.end()));
  c.p_value = static_cast<double>(extreme) / static_cast<double>(total);
  return c;
}

// ---- cumulative accuracy difference ------------------------------------------

namespace detail_an {

inline void check_permutation(const std::vector<std::size_t>& order, std::size_t n) {
  if (order.size() != n) throw ValidationError("score order length differs from the sample count");
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) throw ValidationError("score order is not a permutation");
    seen[i] = true;
  }
}

inline std::vector<double> prefix_accuracy(const std::vector<bool>& correct,
                                           const std::vector<std::size_t>& order) {
  std::vector<double> out(order.size());
  double hits = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    hits += correct[order[k]] ? 1.0 : 0.0;
    out[k] = hits / static_cast<double>(k + 1);
  }
  return out;
}

}  // namespace detail_an

/// The seeded random order used as the baseline.
inline std::vector<std::size_t> random_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  detail::Rng rng(detail::derive_seed(seed, "cumulative_order"));
  rng.shuffle(order);
  return order;
}

/// Entry k−1: 100·(random-order prefix accuracy − score-order prefix accuracy)
/// over the first k samples.
inline std::vector<double> cumulative_accuracy_diff(const std::vector<bool>& correct,
                                                    const std::vector<std::size_t>& score_order,
                                                    std::uint64_t seed) {
  detail_an::check_permutation(score_order, correct.size());
  const auto r = detail_an::prefix_accuracy(correct, random_order(correct.size(), seed));
  const auto s = detail_an::prefix_accuracy(correct, score_order);
  std::vector<double> out(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) out[k] = 100.0 * (r[k] - s[k]);
  return out;
}

/// Same, against the exact expectation over all random orders (the overall
/// accuracy at every prefix length).
inline std::vector<double> cumulative_accuracy_diff_expected(
    const std::vector<bool>& correct, const std::vector<std::size_t>& score_order) {
  detail_an::check_permutation(score_order, correct.size());
  const double overall =
      correct.empty() ? 0.0
                      : static_cast<double>(std::count(correct.begin(), correct.end(), true)) /
                            static_cast<double>(correct.size());
  const auto s = detail_an::prefix_accuracy(correct, score_order);
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = 100.0 * (overall - s[k]);
  return out;
}

// ---- token TVD ---------------------------------------------------------------

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

inline Tokenizer whitespace_tokenizer() {
  return [](std::string_view s) { return detail::split_whitespace(s); };
}

using Histogram = std::map<std::string, double>;

inline Histogram token_histogram(const Corpus& c, const Tokenizer& tok = whitespace_tokenizer()) {
  if (c.empty()) throw ValidationError("token histogram of an empty corpus");
  Histogram h;
  double total = 0.0;
  for (const auto& s : c) {
    for (const auto* text : {&s.question, &s.answer}) {
      for (auto& t : tok(*text)) {
        h[t] += 1.0;
        total += 1.0;
      }
    }
  }
  if (total == 0.0) throw ValidationError("corpus has no tokens");
  for (auto& [k, v] : h) v /= total;
  return h;
}

/// ½ Σ |P(x) − Q(x)| over the union alphabet. Inputs must be normalized.
inline double tvd(const Histogram& p, const Histogram& q) {
  double sum = 0.0;
  auto a = p.begin(), b = q.begin();
  while (a != p.end() || b != q.end()) {
    if (b == q.end() || (a != p.end() && a->first < b->first)) {
      sum += std::abs(a->second);
      ++a;
    } else if (a == p.end() || b->first < a->first) {
      sum += std::abs(b->second);
      ++b;
    } else {
      sum += std::abs(a->second - b->second);
      ++a, ++b;
    }
  }
  return std::clamp(0.5 * sum, 0.0, 1.0);
}

inline double token_tvd(const Corpus& a, const Corpus& b,
                        const Tokenizer& tok = whitespace_tokenizer()) {
  return tvd(token_histogram(a, tok), token_histogram(b, tok));
}

// ---- run-derived data ------------------------------------------------------------

/// Mean test accuracy across replicates per iteration. With a single
/// replicate the binomial standard error of that run is used.
inline LearningCurve learning_curve(const engine::RunManifest& m, const std::string& label) {
  LearningCurve c;
  c.label = label;
  for (int t = 0; t < m.iterations; ++t) {
    std::vector<const engine::IterationState*> its;
    for (const auto& r : m.replicates) {
      if (static_cast<int>(r.iterations.size()) > t) its.push_back(&r.iterations[t]);
    }
    if (its.empty()) break;
    CurvePoint p;
    p.replicates = its.size();
    double n = 0.0, mean = 0.0;
    for (auto* s : its) {
      n += static_cast<double>(s->train_size);
      mean += s->accuracy;
    }
    p.n = static_cast<std::size_t>(std::llround(n / its.size()));
    p.mean = mean / its.size();
    if (its.size() == 1) {
      p.standard_error = its.front()->standard_error;
    } else {
      double ss = 0.0;
      for (auto* s : its) ss += (s->accuracy - p.mean) * (s->accuracy - p.mean);
      p.standard_error = std::sqrt(ss / (its.size() - 1)) / std::sqrt(static_cast<double>(its.size()));
    }
    c.points.push_back(p);
  }
  validate(c);
  return c;
}

struct FidelityPoint {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::string parent_id;
  std::string child_id;
  double parent_score = 0.0;
  double child_score = 0.0;
  std::optional<bool> child_correct;
};

inline void require_complete(const engine::RunManifest& m) {
  for (const auto& r : m.replicates) {
    for (int t = 0; t < m.iterations; ++t) {
      const bool committed = static_cast<int>(r.iterations.size()) > t;
      const auto dir = engine::iteration_dir(m.directory, r.seed, t);
      if (!committed || !std::filesystem::exists(dir / "records.jsonl")) {
        throw ValidationError("run " + m.directory.string() + " seed " + std::to_string(r.seed) +
                              " is missing iteration " + std::to_string(t));
      }
    }
  }
}

inline std::vector<FidelityPoint> fidelity_points(const engine::RunManifest& m) {
  std::vector<FidelityPoint> out;
  for (const auto& r : m.replicates) {
    for (const auto& s : r.iterations) {
      const auto path = engine::iteration_dir(m.directory, r.seed, s.t) / "records.jsonl";
      const auto text = detail::read_file(path);
      std::size_t pos = 0;
      while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (detail::trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (j["selection_score"].is_null() || j["child_score"].is_null()) continue;
        FidelityPoint p;
        p.seed = r.seed;
        p.iteration = s.t;
        p.parent_id = j["parent_id"].get<std::string>();
        p.child_id = j["child_id"].get<std::string>();
        p.parent_score = j["selection_score"].get<double>();
        p.child_score = j["child_score"].get<double>();
        if (!j["child_correct"].is_null()) p.child_correct = j["child_correct"].get<bool>();
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty set");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct FidelitySummary {
  std::optional<Correlation> dataset_level;  // medians per (seed, iteration)
  std::optional<Correlation> per_point;      // iteration 0, pooled over seeds
};

inline FidelitySummary fidelity_summary(const std::vector<FidelityPoint>& pts) {
  FidelitySummary out;
  std::map<std::pair<std::uint64_t, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<double> px, cx;
  for (const auto& p : pts) {
    auto& g = groups[{p.seed, p.iteration}];
    g.first.push_back(p.parent_score);
    g.second.push_back(p.child_score);
    if (p.iteration == 0) {
      px.push_back(p.parent_score);
      cx.push_back(p.child_score);
    }
  }
  std::vector<double> mp, mc;
  for (const auto& [k, g] : groups) {
    mp.push_back(median(g.first));
    mc.push_back(median(g.second));
  }
  try {
    if (mp.size() >= 3) out.dataset_level = spearman(mp, mc);
  } catch (const DegenerateInputError&) {
  }
  try {
    if (px.size() >= 3) out.per_point = spearman(px, cx);
  } catch (const DegenerateInputError&) {
  }
  return out;
}

// ---- SVG ----------------------------------------------------------------------

namespace detail_svg {

inline std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) { return detail::format_fixed(v, 2); }

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> xy;
  bool line = true;
};

// Line/scatter chart with linear axes and a legend.
inline std::string chart(const std::string& title, const std::string& xlabel,
                         const std::string& ylabel, const std::vector<Series>& series) {
  const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 55;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series) {
    for (auto [x, y] : s.xy) {
      if (first) {
        x0 = x1 = x;
        y0 = y1 = y;
        first = false;
      }
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       esc(title) + "</text>\n";
  o += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" +
       num(H - B) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" +
       num(H - B) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o += "<text x=\"" + num(sx(xv)) + "\" y=\"" + num(H - B + 16) +
         "\" text-anchor=\"middle\">" + detail::format_fixed(xv, 2) + "</text>\n";
    o += "<text x=\"" + num(L - 6) + "\" y=\"" + num(sy(yv) + 4) + "\" text-anchor=\"end\">" +
         detail::format_fixed(yv, 3) + "</text>\n";
  }
  o += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) +
       "\" text-anchor=\"middle\">" + esc(xlabel) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((T + H - B) / 2) + ")\">" + esc(ylabel) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.line && s.xy.size() > 1) {
      o += "<polyline fill=\"none\" stroke=\"" + std::string(color(i)) + "\" stroke-width=\"2\" points=\"";
      for (std::size_t k = 0; k < s.xy.size(); ++k) {
        if (k) o += ' ';
        o += num(sx(s.xy[k].first)) + "," + num(sy(s.xy[k].second));
      }
      o += "\"/>\n";
    }
    for (auto [x, y] : s.xy) {
      o += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"" + (s.line ? "3" : "2") +
           "\" fill=\"" + color(i) + "\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    o += "<rect x=\"" + num(W - R + 12) + "\" y=\"" + num(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
         color(i) + "\"/>\n";
    o += "<text x=\"" + num(W - R + 28) + "\" y=\"" + num(ly + 1) + "\">" + esc(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

inline std::string heatmap(const WinrateMatrix& w) {
  const std::size_t k = w.labels.size();
  const double cell = 70, L = 150, T = 60;
  const double W = L + cell * static_cast<double>(k) + 20;
  const double H = T + cell * static_cast<double>(k + 1) + 20;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       "pairwise winrate (row beats column)</text>\n";
  const auto means = w.column_means();
  auto shade = [](double v) {
    const int c = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
    return "rgb(" + std::to_string(c) + "," + std::to_string(c) + ",255)";
  };
  for (std::size_t j = 0; j < k; ++j) {
    o += "<text x=\"" + num(L + cell * (j + 0.5)) + "\" y=\"" + num(T - 8) +
         "\" text-anchor=\"middle\">" + esc(w.labels[j]) + "</text>\n";
  }
  for (std::size_t i = 0; i <= k; ++i) {
    const std::string row = i < k ? w.labels[i] : std::string("column mean");
    o += "<text x=\"" + num(L - 8) + "\" y=\"" + num(T + cell * (i + 0.5) + 4) +
         "\" text-anchor=\"end\">" + esc(row) + "</text>\n";
    for (std::size_t j = 0; j < k; ++j) {
      const double v = i < k ? w.rate(i, j) : means[j];
      o += "<rect x=\"" + num(L + cell * j) + "\" y=\"" + num(T + cell * i) + "\" width=\"" + num(cell) +
           "\" height=\"" + num(cell) + "\" fill=\"" + shade(v) + "\" stroke=\"white\"/>\n";
      o += "<text x=\"" + num(L + cell * (j + 0.5)) + "\" y=\"" + num(T + cell * (i + 0.5) + 4) +
           "\" text-anchor=\"middle\">" + detail::format_fixed(v, 2) + "</text>\n";
    }
  }
  o += "</svg>\n";
  return o;
}

}  // namespace detail_svg

// ---- report ---------------------------------------------------------------------

namespace detail_an {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += csv_field(cells[i]);
  }
  return out + "\r\n";
}

inline std::string opt_num(const std::optional<Correlation>& c, bool rho) {
  if (!c) return "";
  return detail::format_double(rho ? c->rho : c->p_value);
}

}  // namespace detail_an

struct LabeledRun {
  std::string label;
  std::string dataset;
  engine::RunManifest manifest;
};

/// Algorithm label (run name, disambiguated by hash) and dataset kind.
inline std::vector<LabeledRun> label_runs(const std::vector<engine::RunManifest>& manifests) {
  std::vector<LabeledRun> out;
  std::map<std::string, int> used;
  for (const auto& m : manifests) {
    LabeledRun r;
    r.label = m.config.contains("run") ? m.config["run"].value("name", "run") : "run";
    r.dataset = m.config.contains("data") ? m.config["data"].value("kind", "data") : "data";
    if (used[r.dataset + '\x1f' + r.label]++) r.label += "@" + m.config_hash.substr(0, 8);
    r.manifest = m;
    out.push_back(std::move(r));
  }
  return out;
}

/// Writes CSV tables and SVG plots for a set of completed runs. Returns the
/// written paths in a fixed order.
inline std::vector<std::filesystem::path> emit_report(
    const std::vector<engine::RunManifest>& manifests, const std::filesystem::path& out_dir) {
  using detail_an::csv_row;
  using detail::format_double;
  if (manifests.empty()) throw ValidationError("no manifests to report on");
  for (const auto& m : manifests) require_complete(m);
  std::vector<std::string> hashes;
  for (const auto& m : manifests) hashes.push_back(m.config_hash);
  std::sort(hashes.begin(), hashes.end());
  const std::string prefix = detail::digest(detail::join(hashes, ",")).substr(0, 12);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());

  const auto runs = label_runs(manifests);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = out_dir / (prefix + "_" + name);
    detail::write_file_atomic(path, content);
    written.push_back(path);
  };

  // Learning curves.
  std::map<std::string, std::vector<LearningCurve>> curves;
  {
    std::string csv = csv_row({"algorithm", "dataset", "n", "mean_accuracy", "standard_error", "replicates"});
    std::vector<detail_svg::Series> series;
    std::set<std::string> datasets;
    for (const auto& r : runs) datasets.insert(r.dataset);
    for (const auto& r : runs) {
      auto c = learning_curve(r.manifest, r.label);
      detail_svg::Series s{datasets.size() > 1 ? r.label + " (" + r.dataset + ")" : r.label, {}, true};
      for (const auto& p : c.points) {
        csv += csv_row({r.label, r.dataset, std::to_string(p.n), format_double(p.mean),
                        format_double(p.standard_error), std::to_string(p.replicates)});
        s.xy.emplace_back(static_cast<double>(p.n), p.mean);
      }
      series.push_back(std::move(s));
      curves[r.dataset].push_back(std::move(c));
    }
    emit("learning_curve.csv", csv);
    emit("learning_curve.svg",
         detail_svg::chart("learning curves", "synthetic training samples", "test accuracy", series));
  }

  // Winrate over datasets with a shared grid.
  {
    const auto w = winrate(curves, 1.0);
    std::vector<std::string> header{"row"};
    for (const auto& l : w.labels) header.push_back(l);
    std::string csv = csv_row(header);
    for (std::size_t i = 0; i < w.labels.size(); ++i) {
      std::vector<std::string> row{w.labels[i]};
      for (std::size_t j = 0; j < w.labels.size(); ++j) row.push_back(format_double(w.rate(i, j)));
      csv += csv_row(row);
    }
    std::vector<std::string> means{"column_mean"};
    for (double v : w.column_means()) means.push_back(format_double(v));
    csv += csv_row(means);
    emit("winrate.csv", csv);
    emit("winrate.svg", detail_svg::heatmap(w));
  }

  // Score fidelity.
  std::map<std::string, std::vector<FidelityPoint>> fidelity;
  {
    std::string csv = csv_row({"algorithm", "seed", "iteration", "parent_id", "child_id",
                               "parent_score", "child_score", "child_correct"});
    std::string summary = csv_row({"algorithm", "level", "rho", "p_value"});
    std::vector<detail_svg::Series> series;
    for (const auto& r : runs) {
      auto pts = fidelity_points(r.manifest);
      detail_svg::Series s{r.label, {}, false};
      for (const auto& p : pts) {
        csv += csv_row({r.label, std::to_string(p.seed), std::to_string(p.iteration), p.parent_id,
                        p.child_id, format_double(p.parent_score), format_double(p.child_score),
                        p.child_correct ? (*p.child_correct ? "1" : "0") : ""});
        s.xy.emplace_back(p.parent_score, p.child_score);
      }
      const auto fs = fidelity_summary(pts);
      summary += csv_row({r.label, "dataset_median", detail_an::opt_num(fs.dataset_level, true),
                          detail_an::opt_num(fs.dataset_level, false)});
      summary += csv_row({r.label, "per_point_t0", detail_an::opt_num(fs.per_point, true),
                          detail_an::opt_num(fs.per_point, false)});
      if (!s.xy.empty()) series.push_back(std::move(s));
      fidelity[r.label] = std::move(pts);
    }
    emit("fidelity.csv", csv);
    emit("fidelity_summary.csv", summary);
    emit("fidelity.svg",
         detail_svg::chart("score fidelity", "original sample score", "synthetic sample score", series));
  }

  // Cumulative accuracy differences: children ordered by parent difficulty.
  {
    std::string csv = csv_row({"algorithm", "seed", "iteration", "k", "diff_percentage_points"});
    std::vector<detail_svg::Series> series;
    for (const auto& r : runs) {
      const bool high_first = r.manifest.config["selection"].value("direction", "high") == "high";
      std::map<std::pair<std::uint64_t, int>, std::vector<const FidelityPoint*>> groups;
      for (const auto& p : fidelity[r.label]) {
        if (p.child_correct) groups[{p.seed, p.iteration}].push_back(&p);
      }
      for (const auto& [key, pts] : groups) {
        std::vector<bool> correct;
        std::vector<double> score;
        for (auto* p : pts) {
          correct.push_back(*p->child_correct);
          score.push_back(p->parent_score);
        }
        std::vector<std::size_t> order(pts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
          return high_first ? score[a] > score[b] : score[a] < score[b];
        });
        const auto diff = cumulative_accuracy_diff(
            correct, order, detail::derive_seed(key.first, "cumulative", {std::uint64_t(key.second)}));
        detail_svg::Series s{r.label + " s" + std::to_string(key.first) + " t" + std::to_string(key.second), {}, true};
        for (std::size_t k = 0; k < diff.size(); ++k) {
          csv += csv_row({r.label, std::to_string(key.first), std::to_string(key.second),
                          std::to_string(k + 1), format_double(diff[k])});
          s.xy.emplace_back(static_cast<double>(k + 1), diff[k]);
        }
        series.push_back(std::move(s));
      }
    }
    emit("cumulative_diff.csv", csv);
    emit("cumulative_diff.svg", detail_svg::chart("cumulative accuracy: random minus score order",
                                                  "synthetic samples seen", "difference (pp)", series));
  }

  // Token TVD between the seed corpus and each iteration's accumulated synthetic set.
  {
    std::string csv = csv_row({"algorithm", "seed", "iteration", "tvd"});
    for (const auto& r : runs) {
      auto cfg = engine::stored_config(r.manifest.directory);
      const auto data = engine::load_datasets(cfg);
      const auto seed_hist = token_histogram(data.seed);
      for (const auto& rep : r.manifest.replicates) {
        Corpus acc(CorpusRole::kSynthetic, {}, 0);
        for (const auto& s : rep.iterations) {
          const auto synth = load_corpus(
              engine::iteration_dir(r.manifest.directory, rep.seed, s.t) / "synthetic.jsonl",
              CorpusRole::kSynthetic);
          acc = merge_accumulate(synth, acc);
          csv += csv_row({r.label, std::to_string(rep.seed), std::to_string(s.t),
                          format_double(tvd(seed_hist, token_histogram(acc)))});
        }
      }
    }
    emit("tvd.csv", csv);
  }
  return written;
}

}  // namespace itersynth::analysis

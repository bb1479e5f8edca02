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
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "itersynth/detail/rng.hpp"
#include "itersynth/error.hpp"
#include "itersynth/scoring.hpp"

namespace itersynth::selection {

enum class Strategy { kRandom, kArgmax, kSoftmaxSample, kBadge, kPooled };
enum class Direction { kHigh, kLow };
enum class PoolRule { kLionEasyHard, kEvokdCorrectIncorrect };
enum class BadgeAnchor { kOrigin, kRandom };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kArgmax: return "argmax";
    case Strategy::kSoftmaxSample: return "softmax_sample";
    case Strategy::kBadge: return "badge";
    case Strategy::kPooled: return "pooled";
  }
  return "random";
}

inline Strategy strategy_from_string(std::string_view s) {
  for (auto v : {Strategy::kRandom, Strategy::kArgmax, Strategy::kSoftmaxSample,
                 Strategy::kBadge, Strategy::kPooled}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown selection strategy '" + std::string(s) + "'");
}

inline std::string_view to_string(Direction d) {
  return d == Direction::kHigh ? "high" : "low";
}

inline Direction direction_from_string(std::string_view s) {
  if (s == "high") return Direction::kHigh;
  if (s == "low") return Direction::kLow;
  throw ValidationError("unknown direction '" + std::string(s) + "'");
}

inline std::string_view to_string(PoolRule r) {
  return r == PoolRule::kLionEasyHard ? "lion_easy_hard" : "evokd_correct_incorrect";
}

inline PoolRule pool_rule_from_string(std::string_view s) {
  if (s == "lion_easy_hard") return PoolRule::kLionEasyHard;
  if (s == "evokd_correct_incorrect") return PoolRule::kEvokdCorrectIncorrect;
  throw ValidationError("unknown pool rule '" + std::string(s) + "'");
}

inline std::string_view to_string(BadgeAnchor a) {
  return a == BadgeAnchor::kOrigin ? "origin" : "random";
}

inline BadgeAnchor badge_anchor_from_string(std::string_view s) {
  if (s == "origin") return BadgeAnchor::kOrigin;
  if (s == "random") return BadgeAnchor::kRandom;
  throw ValidationError("unknown BADGE anchor '" + std::string(s) + "'");
}

struct SelectionConfig {
  Strategy strategy = Strategy::kArgmax;
  std::size_t m = 1000;
  Direction direction = Direction::kHigh;
  double temperature = 1.0;
  PoolRule pool_rule = PoolRule::kLionEasyHard;
  BadgeAnchor badge_anchor = BadgeAnchor::kOrigin;
  // Lion: hard iff teacher − student ≥ this gap.
  double lion_hard_gap = 1.0;
  // Key "judge_gap" ranks judge_pair scores by teacher − student.
  bool rank_by_judge_gap = false;
  bool exclude_previously_selected = false;
  std::uint64_t seed = 0;
};

inline void validate(const SelectionConfig& c) {
  if (c.m < 1) throw ValidationError("selection batch size m must be >= 1");
  if (!(c.temperature > 0.0)) throw ValidationError("softmax temperature must be > 0");
}

inline void check_batch(std::size_t m, std::size_t n) {
  if (m < 1) throw ValidationError("selection batch size m must be >= 1");
  if (m > n) {
    throw ValidationError("cannot select m=" + std::to_string(m) + " from " +
                          std::to_string(n) + " candidates");
  }
}

namespace detail_sel {

inline void check_unique(const std::vector<std::string>& ids) {
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw ValidationError("duplicate candidate id '" + id + "'");
    }
  }
}

inline std::vector<std::string> ids_of(const std::vector<scoring::Score>& scores) {
  std::vector<std::string> ids;
  ids.reserve(scores.size());
  for (const auto& s : scores) ids.push_back(s.sample_id);
  return ids;
}

}  // namespace detail_sel

/// Full ranking of all candidates, best first. Stable: equal scores keep
/// input order.
inline std::vector<std::size_t> argmax_order(const std::vector<double>& values,
                                             Direction direction) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (direction == Direction::kHigh) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  }
  return order;
}

/// The m most extreme scores; ties broken by input order.
inline std::vector<std::string> select_argmax(const std::vector<scoring::Score>& scores,
                                              std::size_t m, Direction direction) {
  check_batch(m, scores.size());
  const auto ids = detail_sel::ids_of(scores);
  detail_sel::check_unique(ids);
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& s : scores) values.push_back(s.value);
  const auto order = argmax_order(values, direction);
  std::vector<std::string> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(ids[order[i]]);
  return out;
}

/// Argmax after a seeded shuffle, so equal scores are ordered at random
/// rather than by position. Used for binary scores such as correctness.
inline std::vector<std::string> select_argmax_shuffled_ties(
    const std::vector<scoring::Score>& scores, std::size_t m, Direction direction,
    std::uint64_t seed) {
  check_batch(m, scores.size());
  std::vector<scoring::Score> shuffled = scores;
  detail::Rng rng(detail::derive_seed(seed, "tie_shuffle"));
  rng.shuffle(shuffled);
  return select_argmax(shuffled, m, direction);
}

/// m distinct ids drawn without replacement from softmax(s / temperature).
/// Gumbel-top-k gives exactly the sequential-sampling distribution.
inline std::vector<std::string> select_softmax_sample(const std::vector<scoring::Score>& scores,
                                                      std::size_t m, double temperature,
                                                      std::uint64_t seed) {
  check_batch(m, scores.size());
  if (!(temperature > 0.0)) throw ValidationError("softmax temperature must be > 0");
  const auto ids = detail_sel::ids_of(scores);
  detail_sel::check_unique(ids);
  detail::Rng rng(detail::derive_seed(seed, "softmax"));
  std::vector<double> keys;
  keys.reserve(scores.size());
  for (const auto& s : scores) keys.push_back(s.value / temperature + rng.gumbel());
  const auto order = argmax_order(keys, Direction::kHigh);
  std::vector<std::string> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(ids[order[i]]);
  return out;
}

/// Uniform sample without replacement (partial Fisher-Yates).
inline std::vector<std::string> select_random(std::vector<std::string> ids, std::size_t m,
                                              std::uint64_t seed) {
  check_batch(m, ids.size());
  detail_sel::check_unique(ids);
  detail::Rng rng(detail::derive_seed(seed, "random"));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  return ids;
}

/// k-means++ seeding over gradient embeddings. The first pick is drawn
/// proportionally to squared norm (origin anchor) or uniformly (random
/// anchor); each later pick proportionally to the squared distance to the
/// nearest pick so far. When every remaining distance is zero the rest is
/// filled uniformly at random.
inline std::vector<std::string> select_badge(const std::vector<scoring::GradEmbedding>& embeddings,
                                             std::size_t m, std::uint64_t seed,
                                             BadgeAnchor anchor = BadgeAnchor::kOrigin) {
  check_batch(m, embeddings.size());
  const std::size_t n = embeddings.size();
  const std::size_t dim = embeddings.front().vector.size();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) {
      throw ValidationError("embedding '" + e.sample_id + "' has dimension " +
                            std::to_string(e.vector.size()) + ", expected " +
                            std::to_string(dim));
    }
    for (double x : e.vector) {
      if (!std::isfinite(x)) {
        throw ValidationError("embedding '" + e.sample_id + "' has a non-finite entry");
      }
    }
    ids.push_back(e.sample_id);
  }
  detail_sel::check_unique(ids);

  detail::Rng rng(detail::derive_seed(seed, "badge"));
  std::vector<bool> picked(n, false);
  std::vector<double> nearest(n);
  std::vector<std::string> out;
  out.reserve(m);

  auto sq_dist = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = embeddings[a].vector[k] - embeddings[b].vector[k];
      acc += d * d;
    }
    return acc;
  };
  auto fill_uniform = [&] {
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (!picked[i]) rest.push_back(ids[i]);
    }
    const auto tail = select_random(std::move(rest), m - out.size(),
                                    detail::derive_seed(seed, "badge_fill"));
    out.insert(out.end(), tail.begin(), tail.end());
  };

  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double x : embeddings[i].vector) acc += x * x;
    nearest[i] = anchor == BadgeAnchor::kOrigin ? acc : 1.0;
  }
  while (out.size() < m) {
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) weights[i] = picked[i] ? 0.0 : nearest[i];
    const std::size_t choice = rng.weighted_index(weights);
    if (choice >= n) {
      fill_uniform();
      break;
    }
    picked[choice] = true;
    out.push_back(ids[choice]);
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      const double d = sq_dist(i, choice);
      nearest[i] = out.size() == 1 ? d : std::min(nearest[i], d);
    }
  }
  return out;
}

/// Half the batch from each pool (⌈m/2⌉ from `a`), uniformly without
/// replacement, with any shortfall topped up from the other pool. Output
/// interleaves the pools so any prefix stays balanced.
inline std::vector<std::string> select_pooled(const std::vector<std::string>& pool_a,
                                              const std::vector<std::string>& pool_b,
                                              std::size_t m, std::uint64_t seed) {
  {
    std::unordered_set<std::string_view> in_a(pool_a.begin(), pool_a.end());
    if (in_a.size() != pool_a.size()) throw ValidationError("duplicate id in pool a");
    std::unordered_set<std::string_view> in_b;
    for (const auto& id : pool_b) {
      if (in_a.count(id)) throw ValidationError("pools overlap on id '" + id + "'");
      if (!in_b.insert(id).second) throw ValidationError("duplicate id in pool b");
    }
  }
  check_batch(m, pool_a.size() + pool_b.size());
  std::size_t want_a = (m + 1) / 2;
  std::size_t want_b = m / 2;
  if (want_a > pool_a.size()) {
    want_b += want_a - pool_a.size();
    want_a = pool_a.size();
  }
  if (want_b > pool_b.size()) {
    want_a += want_b - pool_b.size();
    want_b = pool_b.size();
  }
  std::vector<std::string> a, b;
  if (want_a > 0) a = select_random(pool_a, want_a, detail::derive_seed(seed, "pool_a"));
  if (want_b > 0) b = select_random(pool_b, want_b, detail::derive_seed(seed, "pool_b"));
  std::vector<std::string> out;
  out.reserve(m);
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    if (i < a.size()) out.push_back(a[i]);
    if (i < b.size()) out.push_back(b[i]);
  }
  return out;
}

/// Lion split: (hard, easy) by teacher − student ≥ gap.
inline std::pair<std::vector<std::string>, std::vector<std::string>> lion_pools(
    const std::vector<scoring::Score>& judge_scores, double hard_gap) {
  std::vector<std::string> hard, easy;
  for (const auto& s : judge_scores) {
    (scoring::judge_gap(s) >= hard_gap ? hard : easy).push_back(s.sample_id);
  }
  return {hard, easy};
}

/// EvoKD split: (incorrect, correct) from correctness scores.
inline std::pair<std::vector<std::string>, std::vector<std::string>> evokd_pools(
    const std::vector<scoring::Score>& correctness) {
  std::vector<std::string> incorrect, correct;
  for (const auto& s : correctness) {
    (s.value == 0.0 ? incorrect : correct).push_back(s.sample_id);
  }
  return {incorrect, correct};
}

}  // namespace itersynth::selection

// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Confirmatory-test harness: class-balanced SRSWOR test sets drawn from a
// shrinking pool, per-trial precision percentages, their mean and its
// complement, and the confusion matrix with pneumonic as the positive class.

#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <ostream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "roentgen/diagnosis.hpp"
#include "roentgen/error.hpp"
#include "roentgen/random.hpp"

namespace roentgen {

/// Exact non-negative rational, always in lowest terms with den > 0.
/// Percentages are carried this way so 91.2 and 8.8 come out exactly.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw ArgumentError("rational with zero denominator");
    normalize();
  }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Rational operator+(Rational a, Rational b) { return combine(a, b, 1); }
  friend Rational operator-(Rational a, Rational b) { return combine(a, b, -1); }
  friend Rational operator/(Rational a, std::int64_t k) {
    if (k == 0) throw ArgumentError("rational division by zero");
    const std::int64_t g = std::gcd(a.num_, k);
    return Rational(a.num_ / g, narrow(static_cast<__int128>(a.den_) * (k / g)));
  }
  friend bool operator==(const Rational&, const Rational&) = default;

  /// Fixed one-decimal rendering, half away from zero ("91.2").
  std::string to_string_1dp() const {
    const bool negative = num_ < 0;
    const std::int64_t n = negative ? -num_ : num_;
    const std::int64_t tenths = (2 * n * 10 + den_) / (2 * den_);
    std::string s = std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
    return negative ? "-" + s : s;
  }

 private:
  static std::int64_t narrow(__int128 v) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
      throw ArgumentError("rational overflow");
    return static_cast<std::int64_t>(v);
  }

  // a +/- b over the least common denominator, reduced before narrowing.
  static Rational combine(Rational a, Rational b, int sign) {
    const std::int64_t g = std::gcd(a.den_, b.den_);
    __int128 den = static_cast<__int128>(a.den_ / g) * b.den_;
    __int128 num = static_cast<__int128>(a.num_) * (b.den_ / g) + sign * static_cast<__int128>(b.num_) * (a.den_ / g);
    __int128 x = num < 0 ? -num : num, y = den;
    while (y != 0) {
      const __int128 t = x % y;
      x = y;
      y = t;
    }
    if (x > 1) {
      num /= x;
      den /= x;
    }
    return Rational(narrow(num), narrow(den));
  }

  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline std::ostream& operator<<(std::ostream& out, const Rational& r) {
  return out << r.num() << '/' << r.den();
}

inline std::string percent_string(const Rational& r) { return r.to_string_1dp() + " %"; }

/// Arithmetic mean.
inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("mean of an empty list");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

inline Rational mean(std::span<const Rational> xs) {
  if (xs.empty()) throw ArgumentError("mean of an empty list");
  Rational sum(0);
  for (const auto& x : xs) sum = sum + x;
  return sum / static_cast<std::int64_t>(xs.size());
}

/// Simple random sample without replacement: k distinct elements, uniform
/// over k-subsets (partial Fisher-Yates). k == size yields a permutation.
template <typename T>
std::vector<T> srswor(std::span<const T> population, std::size_t k, Rng& rng) {
  if (k > population.size())
    throw ArgumentError("cannot sample " + std::to_string(k) + " from a population of " +
                        std::to_string(population.size()));
  std::vector<T> pool(population.begin(), population.end());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

template <typename T>
std::vector<T> srswor(const std::vector<T>& population, std::size_t k, Rng& rng) {
  return srswor(std::span<const T>(population), k, rng);
}

/// Index sets for `trials` disjoint test sets of `per_class` positives
/// followed by `per_class` negatives. Each trial's draw is removed from the
/// per-class pools before the next trial is drawn.
inline std::vector<std::vector<std::size_t>> build_trial_indices(std::span<const Label> labels,
                                                                 std::size_t trials,
                                                                 std::size_t per_class, Rng& rng) {
  if (trials == 0) throw ArgumentError("trial count must be positive");
  std::vector<std::size_t> pools[2];
  for (std::size_t i = 0; i < labels.size(); ++i) pools[target_of(labels[i])].push_back(i);
  const std::size_t required = trials * per_class;
  for (Label l : {Label::pneumonic, Label::not_pneumonic}) {
    const std::size_t available = pools[target_of(l)].size();
    if (available < required)
      throw ArgumentError("insufficient " + std::string(to_string(l)) + " population: required " +
                          std::to_string(required) + ", available " + std::to_string(available));
  }
  std::vector<std::vector<std::size_t>> sets(trials);
  for (auto& set : sets) {
    for (Label l : {Label::pneumonic, Label::not_pneumonic}) {
      auto& pool = pools[target_of(l)];
      const auto drawn = srswor(std::span<const std::size_t>(pool), per_class, rng);
      set.insert(set.end(), drawn.begin(), drawn.end());
      std::vector<bool> taken(labels.size(), false);
      for (std::size_t i : drawn) taken[i] = true;
      std::erase_if(pool, [&](std::size_t i) { return taken[i]; });
    }
  }
  return sets;
}

/// Items need `label` and `id` members (e.g. LabeledImage).
template <typename Item>
std::vector<std::vector<Item>> build_trials(std::span<const Item> dataset, std::size_t trials,
                                            std::size_t per_class, Rng& rng) {
  std::vector<Label> labels;
  labels.reserve(dataset.size());
  for (const auto& item : dataset) labels.push_back(item.label);
  std::vector<std::vector<Item>> sets;
  for (const auto& idx : build_trial_indices(labels, trials, per_class, rng)) {
    auto& set = sets.emplace_back();
    set.reserve(idx.size());
    for (std::size_t i : idx) set.push_back(dataset[i]);
  }
  return sets;
}

struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  std::int64_t matched() const { return tp + tn; }
  std::int64_t unmatched() const { return fp + fn; }

  void add(Label truth, Label predicted) {
    if (truth == Label::pneumonic)
      (predicted == Label::pneumonic ? tp : fn)++;
    else
      (predicted == Label::pneumonic ? fp : tn)++;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct TrialRecord {
  std::string id;
  Label truth = Label::not_pneumonic;
  Label diagnosis = Label::not_pneumonic;
  double score = 0.0;
  bool matched = false;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct TrialResult {
  std::size_t index = 0;  // 1-based
  std::vector<TrialRecord> records;
  ConfusionMatrix confusion;
  std::int64_t matched = 0;
  std::int64_t unmatched = 0;
  Rational dpp;  // matched / n * 100

  std::int64_t sample_size() const { return matched + unmatched; }
  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

/// Builds a trial's tallies and precision percentage from its confusion cells.
inline TrialResult trial_from_confusion(std::size_t index, const ConfusionMatrix& c) {
  if (c.total() <= 0) throw ArgumentError("trial has no samples");
  TrialResult t;
  t.index = index;
  t.confusion = c;
  t.matched = c.matched();
  t.unmatched = c.unmatched();
  t.dpp = Rational(t.matched * 100, c.total());
  return t;
}

/// Classifies every image of a test set and tallies the matches.
/// `classify` maps an item to a Diagnosis; any exception it throws is
/// rethrown as TrialError carrying the item's id.
template <typename Item, typename Classifier>
TrialResult run_trial(Classifier&& classify, std::span<const Item> test_set, std::size_t index = 1) {
  if (test_set.empty()) throw ArgumentError("trial " + std::to_string(index) + " has an empty test set");
  ConfusionMatrix c;
  std::vector<TrialRecord> records;
  records.reserve(test_set.size());
  for (const auto& item : test_set) {
    Diagnosis d;
    try {
      d = classify(item);
    } catch (const std::exception& e) {
      throw TrialError(item.id, e.what());
    }
    c.add(item.label, d.label);
    records.push_back({item.id, item.label, d.label, d.score, item.label == d.label});
  }
  TrialResult t = trial_from_confusion(index, c);
  t.records = std::move(records);
  return t;
}

/// Runs every test set; sets are disjoint and classify must be pure, so
/// `parallel` runs them concurrently with identical results.
template <typename Item, typename Classifier>
std::vector<TrialResult> run_trials(Classifier&& classify, const std::vector<std::vector<Item>>& sets,
                                    bool parallel = false) {
  std::vector<TrialResult> out;
  out.reserve(sets.size());
  if (!parallel) {
    for (std::size_t i = 0; i < sets.size(); ++i)
      out.push_back(run_trial<Item>(classify, std::span<const Item>(sets[i]), i + 1));
    return out;
  }
  std::vector<std::future<TrialResult>> pending;
  for (std::size_t i = 0; i < sets.size(); ++i)
    pending.push_back(std::async(std::launch::async, [&, i] {
      return run_trial<Item>(classify, std::span<const Item>(sets[i]), i + 1);
    }));
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

struct EvaluationReport {
  std::vector<TrialResult> trials;
  Rational gdpp;  // mean of trial dpp
  Rational gdep;  // 100 - gdpp
  ConfusionMatrix aggregate;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

inline EvaluationReport summarize(std::vector<TrialResult> trials) {
  if (trials.empty()) throw ArgumentError("cannot summarize zero trials");
  EvaluationReport r;
  std::vector<Rational> dpps;
  for (const auto& t : trials) {
    dpps.push_back(t.dpp);
    r.aggregate += t.confusion;
  }
  r.gdpp = mean(std::span<const Rational>(dpps));
  r.gdep = Rational(100) - r.gdpp;
  r.trials = std::move(trials);
  return r;
}

inline nlohmann::json to_json(const Rational& r) {
  return {{"num", r.num()}, {"den", r.den()}, {"value", r.value()}, {"display", percent_string(r)}};
}

inline Rational rational_from_json(const nlohmann::json& j) {
  return Rational(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}

inline nlohmann::json to_json(const ConfusionMatrix& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  return {j.at("tp").get<std::int64_t>(), j.at("fp").get<std::int64_t>(),
          j.at("fn").get<std::int64_t>(), j.at("tn").get<std::int64_t>()};
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : t.records)
      records.push_back({{"id", rec.id},
                         {"label", to_string(rec.truth)},
                         {"diagnosis", to_string(rec.diagnosis)},
                         {"score", rec.score},
                         {"matched", rec.matched}});
    trials.push_back({{"trial", t.index},
                      {"matched", t.matched},
                      {"unmatched", t.unmatched},
                      {"dpp", to_json(t.dpp)},
                      {"confusion", to_json(t.confusion)},
                      {"records", records}});
  }
  return {{"trials", trials},
          {"gdpp", to_json(r.gdpp)},
          {"gdep", to_json(r.gdep)},
          {"aggregate_confusion", to_json(r.aggregate)}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  for (const auto& tj : j.at("trials")) {
    TrialResult t;
    t.index = tj.at("trial").get<std::size_t>();
    t.matched = tj.at("matched").get<std::int64_t>();
    t.unmatched = tj.at("unmatched").get<std::int64_t>();
    t.dpp = rational_from_json(tj.at("dpp"));
    t.confusion = confusion_from_json(tj.at("confusion"));
    for (const auto& rj : tj.at("records"))
      t.records.push_back({rj.at("id").get<std::string>(),
                           label_from_string(rj.at("label").get<std::string>()),
                           label_from_string(rj.at("diagnosis").get<std::string>()),
                           rj.at("score").get<double>(), rj.at("matched").get<bool>()});
    r.trials.push_back(std::move(t));
  }
  r.gdpp = rational_from_json(j.at("gdpp"));
  r.gdep = rational_from_json(j.at("gdep"));
  r.aggregate = confusion_from_json(j.at("aggregate_confusion"));
  return r;
}

/// Plain-text table: one block per trial, then the final result and the
/// confusion matrix.
inline std::string render_table(const EvaluationReport& r) {
  std::ostringstream out;
  out << "Result of the " << r.trials.size() << "-Trial Confirmatory Test\n\n";
  for (const auto& t : r.trials) {
    out << "Trial " << t.index << '\n'
        << "  Matched Diagnosis                 " << t.matched << '\n'
        << "  Unmatched Diagnosis               " << t.unmatched << '\n'
        << "  Diagnosis Precision Percentage    " << percent_string(t.dpp) << '\n';
  }
  out << "Final Result\n"
      << "  General Diagnosis Precision Percentage: " << percent_string(r.gdpp) << '\n'
      << "  General Diagnosis Error Percentage:     " << percent_string(r.gdep) << "\n\n";
  out << "Confusion Matrix (positive = pneumonic)\n";
  auto row = [&](const char* name, auto cell) {
    out << "  " << std::left << std::setw(16) << name;
    for (const auto& t : r.trials) out << std::right << std::setw(5) << cell(t.confusion);
    out << std::right << std::setw(8) << cell(r.aggregate) << '\n';
  };
  out << "  " << std::left << std::setw(16) << "";
  for (const auto& t : r.trials) out << std::right << std::setw(5) << ("T" + std::to_string(t.index));
  out << std::right << std::setw(8) << "Total" << '\n';
  row("True positive", [](const ConfusionMatrix& c) { return c.tp; });
  row("False positive", [](const ConfusionMatrix& c) { return c.fp; });
  row("False negative", [](const ConfusionMatrix& c) { return c.fn; });
  row("True negative", [](const ConfusionMatrix& c) { return c.tn; });
  return out.str();
}

}  // namespace roentgen

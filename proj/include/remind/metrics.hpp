#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "remind/head.hpp"

namespace remind {

struct EvalEvent {
  int batch_index = 0;
  std::vector<uint32_t> classes_seen;
  double alpha = 0.0;          // streaming accuracy at this event
  double alpha_offline = 0.0;  // offline accuracy on the same evaluation set
};

struct EvalTrace {
  std::vector<EvalEvent> events;
  bool eval_on_seen_classes_only = true;
  std::string offline_variant;  // which offline model normalized this trace
};

// Fraction of samples whose true label appears in the top-k ranked classes.
inline double topk_accuracy(const std::vector<std::vector<int>>& ranked,
                            const std::vector<uint32_t>& labels, int k) {
  if (ranked.empty()) throw std::invalid_argument("topk_accuracy: empty evaluation set");
  if (ranked.size() != labels.size())
    throw std::invalid_argument("topk_accuracy: size mismatch");
  if (k < 1) throw std::invalid_argument("topk_accuracy: k < 1");
  size_t hits = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    int kk = std::min<int>(k, static_cast<int>(ranked[i].size()));
    for (int j = 0; j < kk; ++j)
      if (ranked[i][j] == static_cast<int>(labels[i])) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / ranked.size();
}

// Mean over events of alpha_t / alpha_offline_t. 1.0 means parity with the
// offline model.
inline double omega_all(const EvalTrace& trace) {
  if (trace.events.empty()) throw std::invalid_argument("omega_all: empty trace");
  double acc = 0.0;
  for (const auto& e : trace.events) {
    if (e.alpha_offline <= 0.0)
      throw std::invalid_argument("omega_all: zero offline accuracy at an event");
    acc += e.alpha / e.alpha_offline;
  }
  return acc / trace.events.size();
}

// Plain mean accuracy over events.
inline double mu_all(const EvalTrace& trace) {
  if (trace.events.empty()) throw std::invalid_argument("mu_all: empty trace");
  double acc = 0.0;
  for (const auto& e : trace.events) acc += e.alpha;
  return acc / trace.events.size();
}

}  // namespace remind

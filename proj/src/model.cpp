// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "curlgauge/error.hpp"

namespace curlgauge {

Vocabulary::Vocabulary(int size) : size_(size) {
  if (size < 2 || size > kMaxVocab) {
    throw CapExceeded(fmt::format("vocabulary size {} outside [2, {}]", size, kMaxVocab));
  }
}

Assignment::Assignment(int positions) : size_(positions) {
  if (positions < 1 || positions > kMaxPositions) {
    throw CapExceeded(fmt::format("position count {} outside [1, {}]", positions, kMaxPositions));
  }
}

Assignment Assignment::from_tokens(std::span<const int> tokens) {
  Assignment a(static_cast<int>(tokens.size()));
  for (int k = 0; k < a.size_; ++k) {
    if (tokens[k] != kUnset) a.set(k, tokens[k]);
  }
  return a;
}

int Assignment::check(int position) const {
  if (position < 0 || position >= size_) {
    throw DimensionError(fmt::format("position {} outside [0, {})", position, size_));
  }
  return position;
}

void Assignment::set(int position, int token) {
  if (token < 0 || token >= kMaxVocab) throw DimensionError(fmt::format("token {} invalid", token));
  tokens_[check(position)] = static_cast<std::int8_t>(token);
}

int Assignment::count_set() const {
  return static_cast<int>(std::count_if(tokens_.begin(), tokens_.begin() + size_,
                                        [](std::int8_t t) { return t != kUnset; }));
}

std::vector<int> Assignment::set_positions() const {
  std::vector<int> out;
  for (int k = 0; k < size_; ++k)
    if (tokens_[k] != kUnset) out.push_back(k);
  return out;
}

std::vector<int> Assignment::unset_positions() const {
  std::vector<int> out;
  for (int k = 0; k < size_; ++k)
    if (tokens_[k] == kUnset) out.push_back(k);
  return out;
}

unsigned Assignment::mask() const {
  unsigned m = 0;
  for (int k = 0; k < size_; ++k)
    if (tokens_[k] != kUnset) m |= 1u << k;
  return m;
}

void PartialContext::validate(int positions, const Vocabulary& vocab) const {
  std::set<int> seen;
  for (const auto& [pos, tok] : observed) {
    if (pos < 0 || pos >= positions) {
      throw DimensionError(fmt::format("observed position {} outside [0, {})", pos, positions));
    }
    if (!vocab.contains(tok)) {
      throw DimensionError(fmt::format("observed token {} outside vocabulary of size {}", tok, vocab.size()));
    }
  }
  if (block.empty()) throw ContractViolation("context block must be non-empty");
  for (int pos : block) {
    if (pos < 0 || pos >= positions) {
      throw DimensionError(fmt::format("block position {} outside [0, {})", pos, positions));
    }
    if (observed.contains(pos)) {
      throw ContractViolation(fmt::format("position {} is both observed and in the block", pos));
    }
    if (!seen.insert(pos).second) {
      throw ContractViolation(fmt::format("position {} repeated in block", pos));
    }
  }
}

Assignment PartialContext::visible(int positions) const {
  Assignment a(positions);
  for (const auto& [pos, tok] : observed) a.set(pos, tok);
  return a;
}

ContextIndex::ContextIndex(int positions, int vocab_size)
    : positions_(positions), vocab_size_(vocab_size), rows_per_position_(1) {
  if (positions < 1 || positions > kMaxPositions) {
    throw CapExceeded(fmt::format("position count {} outside [1, {}]", positions, kMaxPositions));
  }
  for (int k = 0; k + 1 < positions; ++k) rows_per_position_ *= static_cast<std::size_t>(vocab_size + 1);
}

std::size_t ContextIndex::row(int position, const Assignment& visible) const {
  if (visible.size() != positions_) throw DimensionError("context index: assignment size mismatch");
  std::size_t code = 0;
  for (int k = 0; k < positions_; ++k) {
    if (k == position) continue;
    code = code * static_cast<std::size_t>(vocab_size_ + 1) +
           static_cast<std::size_t>(visible[k] == kUnset ? 0 : visible[k] + 1);
  }
  return static_cast<std::size_t>(position) * rows_per_position_ + code;
}

std::pair<int, Assignment> ContextIndex::decode(std::size_t row) const {
  const int position = static_cast<int>(row / rows_per_position_);
  std::size_t code = row % rows_per_position_;
  Assignment visible(positions_);
  for (int k = positions_ - 1; k >= 0; --k) {
    if (k == position) continue;
    const auto digit = static_cast<int>(code % static_cast<std::size_t>(vocab_size_ + 1));
    code /= static_cast<std::size_t>(vocab_size_ + 1);
    if (digit > 0) visible.set(k, digit - 1);
  }
  return {position, visible};
}

void ConditionalOracle::log_conditional(int i, const Assignment& visible, std::span<double> out) const {
  const int n = positions();
  if (visible.size() != n) {
    throw DimensionError(fmt::format("context covers {} positions, model has {}", visible.size(), n));
  }
  if (i < 0 || i >= n) throw DimensionError(fmt::format("position {} outside [0, {})", i, n));
  if (visible.is_set(i)) throw ContractViolation(fmt::format("position {} is already observed", i));
  const int v = vocabulary().size();
  if (static_cast<int>(out.size()) != v) throw DimensionError("output span must match vocabulary size");
  for (int k = 0; k < n; ++k) {
    if (visible.is_set(k) && visible[k] >= v) {
      throw DimensionError(fmt::format("token {} at position {} outside vocabulary", visible[k], k));
    }
  }
  do_log_conditional(i, visible, out);
}

std::vector<double> ConditionalOracle::log_conditional(int i, const Assignment& visible) const {
  std::vector<double> out(static_cast<std::size_t>(vocabulary().size()));
  log_conditional(i, visible, out);
  return out;
}

double ConditionalOracle::log_conditional(int i, int a, const Assignment& visible) const {
  if (!vocabulary().contains(a)) throw DimensionError(fmt::format("token {} outside vocabulary", a));
  std::array<double, kMaxVocab> buffer{};
  const auto out = std::span<double>(buffer.data(), static_cast<std::size_t>(vocabulary().size()));
  log_conditional(i, visible, out);
  return out[static_cast<std::size_t>(a)];
}

}  // namespace curlgauge

// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Core query surface: vocabularies, partial assignments, observed contexts
// and the conditional-oracle interface every diagnostic consumes.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace curlgauge {

inline constexpr int kMaxPositions = 6;
inline constexpr int kMaxVocab = 8;
inline constexpr int kUnset = -1;

class Vocabulary {
 public:
  explicit Vocabulary(int size);

  int size() const { return size_; }
  bool contains(int token) const { return token >= 0 && token < size_; }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  int size_;
};

// Token values over all positions of a model; kUnset marks an unresolved or
// masked coordinate. Fixed capacity, cheap to copy.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(int positions);
  static Assignment from_tokens(std::span<const int> tokens);

  int size() const { return size_; }
  bool is_set(int position) const { return tokens_[check(position)] != kUnset; }
  int operator[](int position) const { return tokens_[check(position)]; }
  void set(int position, int token);
  void clear(int position) { tokens_[check(position)] = kUnset; }

  int count_set() const;
  std::vector<int> set_positions() const;
  std::vector<int> unset_positions() const;
  // Bit k is set when position k carries a token.
  unsigned mask() const;

  friend bool operator==(const Assignment&, const Assignment&) = default;

 private:
  int check(int position) const;

  std::array<std::int8_t, kMaxPositions> tokens_{-1, -1, -1, -1, -1, -1};
  int size_ = 0;
};

// Observed index/value set S plus unresolved block B at an opaque time label.
struct PartialContext {
  std::map<int, int> observed;
  std::vector<int> block;
  double time = 0.0;

  // Throws DimensionError / ContractViolation on malformed contexts.
  void validate(int positions, const Vocabulary& vocab) const;
  Assignment visible(int positions) const;
};

// Calls fn(assignment) for every setting of `positions` on top of base, in
// lexicographic order with the last listed position varying fastest.
template <typename Fn>
void for_each_completion(const Assignment& base, std::span<const int> positions, int vocab_size, Fn&& fn) {
  Assignment current = base;
  for (int p : positions) current.set(p, 0);
  const std::size_t n = positions.size();
  while (true) {
    fn(static_cast<const Assignment&>(current));
    std::size_t k = n;
    while (k > 0) {
      const int p = positions[k - 1];
      if (current[p] + 1 < vocab_size) {
        current.set(p, current[p] + 1);
        break;
      }
      current.set(p, 0);
      --k;
    }
    if (k == 0) return;
  }
}

// Dense row index over (position i, visible context on the other positions).
// Each other position contributes a base-(V+1) digit: 0 = masked, v+1 = token v.
class ContextIndex {
 public:
  ContextIndex(int positions, int vocab_size);

  int positions() const { return positions_; }
  int vocab_size() const { return vocab_size_; }
  std::size_t rows_per_position() const { return rows_per_position_; }
  std::size_t row_count() const { return rows_per_position_ * positions_; }

  std::size_t row(int position, const Assignment& visible) const;
  // Inverse of row(): the position and its visible context.
  std::pair<int, Assignment> decode(std::size_t row) const;

 private:
  int positions_;
  int vocab_size_;
  std::size_t rows_per_position_;
};

// A family of local conditionals q(x_i = a | x_visible). Implementations are
// immutable after construction and safe for concurrent queries.
class ConditionalOracle {
 public:
  virtual ~ConditionalOracle() = default;

  virtual int positions() const = 0;
  virtual Vocabulary vocabulary() const = 0;
  virtual std::string id() const = 0;

  // Writes log q(x_i = . | visible) into out (size |V|). Position i must be
  // unset in visible.
  void log_conditional(int i, const Assignment& visible, std::span<double> out) const;
  std::vector<double> log_conditional(int i, const Assignment& visible) const;
  double log_conditional(int i, int a, const Assignment& visible) const;

 protected:
  virtual void do_log_conditional(int i, const Assignment& visible,
                                  std::span<double> out) const = 0;
};

}  // namespace curlgauge

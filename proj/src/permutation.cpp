// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/permutation.hpp"

#include <algorithm>
#include <utility>

#include <fmt/format.h>

#include "curlgauge/error.hpp"

namespace curlgauge {

bool is_permutation_of(std::span<const int> order, std::span<const int> items) {
  if (order.size() != items.size()) return false;
  std::vector<int> a(order.begin(), order.end());
  std::vector<int> b(items.begin(), items.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b && std::adjacent_find(a.begin(), a.end()) == a.end();
}

std::vector<Order> all_orders(std::vector<int> items) {
  std::sort(items.begin(), items.end());
  std::vector<Order> out;
  do {
    out.push_back(items);
  } while (std::next_permutation(items.begin(), items.end()));
  return out;
}

void apply_adjacent_swap(Order& order, int k) {
  if (k < 1 || k >= static_cast<int>(order.size())) {
    throw ContractViolation(fmt::format("adjacent swap index {} outside [1, {}]", k, order.size() - 1));
  }
  std::swap(order[static_cast<std::size_t>(k - 1)], order[static_cast<std::size_t>(k)]);
}

Order apply_adjacent_swaps(Order order, std::span<const int> steps) {
  for (int k : steps) apply_adjacent_swap(order, k);
  return order;
}

std::vector<int> bubble_swap_path(const Order& from, const Order& to) {
  if (!is_permutation_of(from, to)) throw ContractViolation("swap path endpoints are not permutations of each other");
  // Rank every element by its target slot, then bubble-sort the ranks.
  std::vector<int> ranks(from.size());
  for (std::size_t k = 0; k < from.size(); ++k) {
    ranks[k] = static_cast<int>(std::find(to.begin(), to.end(), from[k]) - to.begin());
  }
  std::vector<int> steps;
  for (std::size_t pass = 0; pass < ranks.size(); ++pass) {
    bool swapped = false;
    for (std::size_t k = 1; k < ranks.size(); ++k) {
      if (ranks[k - 1] > ranks[k]) {
        std::swap(ranks[k - 1], ranks[k]);
        steps.push_back(static_cast<int>(k));
        swapped = true;
      }
    }
    if (!swapped) break;
  }
  return steps;
}

std::vector<int> random_swap_path(const Order& from, const Order& to, int detour,
                                  std::mt19937_64& engine) {
  if (from.size() < 2) return bubble_swap_path(from, to);
  std::uniform_int_distribution<int> pick(1, static_cast<int>(from.size()) - 1);
  std::vector<int> steps;
  Order current = from;
  for (int r = 0; r < detour; ++r) {
    const int k = pick(engine);
    apply_adjacent_swap(current, k);
    steps.push_back(k);
  }
  const auto tail = bubble_swap_path(current, to);
  steps.insert(steps.end(), tail.begin(), tail.end());
  return steps;
}

}  // namespace curlgauge

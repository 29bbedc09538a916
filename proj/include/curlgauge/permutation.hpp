// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace curlgauge {

// Orders are sequences of position indices.
using Order = std::vector<int>;

// True when order lists each element of items exactly once.
bool is_permutation_of(std::span<const int> order, std::span<const int> items);

// All orderings of items in lexicographic order.
std::vector<Order> all_orders(std::vector<int> items);

// Swaps entries k-1 and k (1-based adjacent step k in [1, n-1]).
void apply_adjacent_swap(Order& order, int k);
Order apply_adjacent_swaps(Order order, std::span<const int> steps);

// Bubble-sort path: the shortest adjacent-swap sequence taking from to to.
std::vector<int> bubble_swap_path(const Order& from, const Order& to);

// Random walk of `detour` adjacent swaps followed by the bubble path back to
// the target, so the result always ends at to.
std::vector<int> random_swap_path(const Order& from, const Order& to, int detour,
                                  std::mt19937_64& engine);

}  // namespace curlgauge

/*
 * Copyright 2026 The pebias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Deterministic seed derivation. Every random stage of an experiment draws
// from its own stream, keyed by (master seed, setting, seed index, stage).

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pebias {

using Rng = std::mt19937_64;

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a over the bytes of `s`.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Folds `value` into the running hash `h`. The state is re-hashed before
/// each fold, so swapping two folded values changes the result.
constexpr std::uint64_t mix_seed(std::uint64_t h, std::uint64_t value) {
  return splitmix64(splitmix64(h) ^ value);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(splitmix64(seed), index);
}

constexpr std::uint64_t resolve_seed(std::uint64_t master_seed, std::uint64_t setting_index,
                                     std::uint64_t seed_index, std::string_view stage) {
  std::uint64_t h = splitmix64(master_seed);
  h = mix_seed(h, setting_index);
  h = mix_seed(h, seed_index);
  return mix_seed(h, fnv1a64(stage));
}

}  // namespace pebias

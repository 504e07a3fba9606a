// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace moerob {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Seed splitting rule: derive_seed(parent, tag) = splitmix64(parent ^ fnv1a64(tag)).
// Every consumer (data, init, router noise, attack, tie-breaks) gets its own tag,
// so switching one component on or off does not shift another component's stream.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace moerob

// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "moerob/sparse_moe.hpp"

namespace moerob {

// JSON checkpoint:
//   {"format": "moerob-sparse-moe", "version": 1,
//    "header": {"D", "E", "K", "H", "C", "sigma", "blocks", "noise_enabled"},
//    "parameters": [...]}
// `parameters` is one flat array in parameter_blocks() order with every matrix written
// row-major. Doubles are printed in round-trip precision.
void save_checkpoint(std::ostream& os, const SparseMoE& model);
SparseMoE load_checkpoint(std::istream& is);

}  // namespace moerob

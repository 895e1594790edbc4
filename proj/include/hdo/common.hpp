// Copyright 2026 The HDO Authors.
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace hdo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;
using IndexSpan = std::span<const std::size_t>;

// Purpose tags for independent random streams. The numeric values are part of
// the reproducibility contract: changing them changes every output.
enum class StreamTag : std::uint64_t {
  kEstimator = 0x11,
  kScheduler = 0x22,
  kInit = 0x33,
  kMetrics = 0x44,
  kData = 0x55,
  kPartition = 0x66,
  kReplica = 0x77,
  kProbe = 0x88,
  kCell = 0x99,
};

// Derives an independent 64-bit seed from (master, a, b, tag) by chaining
// splitmix64 finalizers. Used for every rng stream in the simulator so that a
// run is a pure function of its master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          StreamTag tag);

// Fills a length-d vector with i.i.d. standard normal draws.
Vector gaussian_vector(Eigen::Index d, Rng& rng);

std::string_view to_string(StreamTag tag);

}  // namespace hdo

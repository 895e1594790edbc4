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

#include "hdo/common.hpp"

namespace hdo {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          StreamTag tag) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return h;
}

Vector gaussian_vector(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(d);
  for (Eigen::Index i = 0; i < d; ++i) u[i] = normal(rng);
  return u;
}

std::string_view to_string(StreamTag tag) {
  switch (tag) {
    case StreamTag::kEstimator: return "estimator";
    case StreamTag::kScheduler: return "scheduler";
    case StreamTag::kInit: return "init";
    case StreamTag::kMetrics: return "metrics";
    case StreamTag::kData: return "data";
    case StreamTag::kPartition: return "partition";
    case StreamTag::kReplica: return "replica";
    case StreamTag::kProbe: return "probe";
    case StreamTag::kCell: return "cell";
  }
  return "unknown";
}

}  // namespace hdo

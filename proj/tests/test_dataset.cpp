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

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "hdo/dataset.hpp"

namespace hdo {
namespace {

std::vector<std::size_t> flatten(const std::vector<std::vector<std::size_t>>& shards) {
  std::vector<std::size_t> all;
  for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

TEST(Partition, TwoZoAgentsGetHalves) {
  const auto p = partition_data(10, 2, 0, 1);
  ASSERT_EQ(p.zo_shards.size(), 2u);
  EXPECT_EQ(p.zo_shards[0].size(), 5u);
  EXPECT_EQ(p.zo_shards[1].size(), 5u);
  EXPECT_TRUE(p.fo_shards.empty());
}

TEST(Partition, ThreeWaySplitIsBalanced) {
  const auto p = partition_data(10, 3, 0, 1);
  std::multiset<std::size_t> sizes;
  for (const auto& s : p.zo_shards) sizes.insert(s.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{3, 3, 4}));
}

TEST(Partition, SameSeedSamePartition) {
  const auto a = partition_data(97, 3, 5, 42);
  const auto b = partition_data(97, 3, 5, 42);
  EXPECT_EQ(a.zo_shards, b.zo_shards);
  EXPECT_EQ(a.fo_shards, b.fo_shards);
  const auto c = partition_data(97, 3, 5, 43);
  EXPECT_NE(a.fo_shards, c.fo_shards);
}

TEST(Partition, EmptyPopulationRejected) {
  EXPECT_THROW(partition_data(10, 0, 0, 1), std::invalid_argument);
  EXPECT_THROW(partition_data(10, -1, 3, 1), std::invalid_argument);
}

// Each sub-population's shards are a disjoint balanced cover of a full copy.
TEST(Partition, DisjointCoverProperty) {
  for (std::size_t samples : {2u, 7u, 64u, 1001u}) {
    for (auto [n0, n1] : {std::pair{0, 2}, {1, 1}, {3, 5}, {2, 0}, {7, 1}}) {
      if (static_cast<std::size_t>(std::max(n0, n1)) > samples) continue;
      const auto p = partition_data(samples, n0, n1, samples * 31 + n0);
      for (const auto* shards : {&p.zo_shards, &p.fo_shards}) {
        if (shards->empty()) continue;
        EXPECT_EQ(flatten(*shards), iota(samples));
        std::size_t lo = samples, hi = 0;
        for (const auto& s : *shards) {
          lo = std::min(lo, s.size());
          hi = std::max(hi, s.size());
        }
        EXPECT_LE(hi - lo, 1u);
      }
      EXPECT_EQ(p.zo_shards.size(), static_cast<std::size_t>(n0));
      EXPECT_EQ(p.fo_shards.size(), static_cast<std::size_t>(n1));
    }
  }
}

TEST(Partition, EqualSubpopulationsShareShards) {
  const auto p = partition_data(50, 4, 4, 9);
  EXPECT_EQ(p.zo_shards, p.fo_shards);
}

TEST(Partition, WholePopulationModeSplitsOneCopy) {
  const auto p = partition_data(30, 2, 4, 5, PartitionMode::kWholePopulation);
  auto all = p.zo_shards;
  all.insert(all.end(), p.fo_shards.begin(), p.fo_shards.end());
  EXPECT_EQ(flatten(all), iota(30));
  for (const auto& s : all) EXPECT_EQ(s.size(), 5u);
}

TEST(BalancedSplit, ExtraElementsGoFirst) {
  const auto parts = balanced_split(iota(7), 3);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(parts[1], (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(parts[2], (std::vector<std::size_t>{5, 6}));
}

TEST(Csv, ThreeRowsRoundTrip) {
  std::istringstream in("1.5,2,1\n-3,0.25,0\n4,5e-3,1\n");
  const Dataset d = parse_csv_dataset(in);
  ASSERT_EQ(d.size(), 3u);
  ASSERT_EQ(d.dim(), 2);
  EXPECT_DOUBLE_EQ(d.features(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(d.labels(2), 1.0);

  std::ostringstream out;
  write_csv_dataset(out, d);
  std::istringstream again(out.str());
  const Dataset e = parse_csv_dataset(again);
  EXPECT_EQ(e.features, d.features);
  EXPECT_EQ(e.labels, d.labels);
}

TEST(Csv, EmptyInputRejected) {
  std::istringstream in("");
  EXPECT_THROW(parse_csv_dataset(in), FormatError);
}

TEST(Csv, HeaderHandling) {
  std::istringstream with("a,b,y\n1,2,1\n");
  const Dataset d = parse_csv_dataset(with, {.header = true});
  EXPECT_EQ(d.size(), 1u);

  std::istringstream without("a,b,y\n1,2,1\n");
  try {
    parse_csv_dataset(without);
    FAIL() << "header parsed as data";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
}

TEST(Csv, RaggedRowNamesRow) {
  std::istringstream in("h1,h2,y\n1,2,1\n3,1\n");
  try {
    parse_csv_dataset(in, {.header = true});
    FAIL() << "ragged row accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(Csv, CustomDelimiter) {
  std::istringstream in("1;2;0\n");
  const Dataset d = parse_csv_dataset(in, {.header = false, .delimiter = ';'});
  EXPECT_EQ(d.dim(), 2);
}

TEST(Synthetic, DeterministicAndShaped) {
  SyntheticClassificationParams p;
  p.samples = 64;
  p.dim = 3;
  const Dataset a = make_synthetic_classification(p);
  const Dataset b = make_synthetic_classification(p);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_EQ(a.dim(), 3);
  for (Eigen::Index i = 0; i < a.labels.size(); ++i) {
    EXPECT_TRUE(a.labels(i) == 1.0 || a.labels(i) == -1.0);
  }
  p.sample_stream = 1;
  EXPECT_NE(make_synthetic_classification(p).features, a.features);
}

}  // namespace
}  // namespace hdo

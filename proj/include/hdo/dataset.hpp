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
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdo/common.hpp"

namespace hdo {

/// Labeled samples stored row-wise. Labels are real-valued; classification
/// objectives interpret them as {-1, +1} (0 is accepted as -1).
struct Dataset {
  Matrix features;  // rows are samples
  Vector labels;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Throws std::invalid_argument if the dataset is empty or its label count
/// disagrees with its row count.
void validate(const Dataset& data);

/// Raised when a CSV dataset cannot be parsed. `row()` is 1-based and counts
/// the header line when one is present.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t row, const std::string& what);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

struct CsvFormat {
  bool header = false;
  char delimiter = ',';
};

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvFormat& format = {});
Dataset parse_csv_dataset(std::istream& in, const CsvFormat& format = {});
void write_csv_dataset(std::ostream& out, const Dataset& data, bool header = false);

// Shards of sample indices for the two sub-populations. In the default mode
// each sub-population receives its own full copy of the data; `zo_shards`
// and `fo_shards` are each a balanced disjoint cover of [0, samples), cut
// from one shared shuffle.
enum class PartitionMode {
  kPerSubpopulation,
  // One copy split across all n agents; agent i < n0 gets zo_shards[i].
  kWholePopulation,
};

struct DataPartition {
  std::vector<std::vector<std::size_t>> zo_shards;
  std::vector<std::vector<std::size_t>> fo_shards;
};

DataPartition partition_data(std::size_t samples, int n0, int n1, std::uint64_t seed,
                             PartitionMode mode = PartitionMode::kPerSubpopulation);

/// Convenience overload using the dataset's sample count.
DataPartition partition_data(const Dataset& data, int n0, int n1, std::uint64_t seed,
                             PartitionMode mode = PartitionMode::kPerSubpopulation);

/// Splits `indices` into `parts` contiguous chunks whose sizes differ by at
/// most one; the first `indices.size() % parts` chunks get the extra element.
std::vector<std::vector<std::size_t>> balanced_split(const std::vector<std::size_t>& indices,
                                                     int parts);

// Binary data from a logistic teacher: a ~ N(0, scale^2 I), P(y = +1) =
// sigmoid(<a, w>) with w drawn once at norm `signal`; each label is then
// flipped with probability `label_flip`.
struct SyntheticClassificationParams {
  std::size_t samples = 2000;
  Eigen::Index dim = 20;
  double feature_scale = 1.0;
  double signal = 2.0;
  double label_flip = 0.05;
  std::uint64_t seed = 1;
  // Samples drawn from different streams share the same teacher vector, so a
  // validation set is the same seed with a different stream.
  std::uint64_t sample_stream = 0;
};

Dataset make_synthetic_classification(const SyntheticClassificationParams& params);

}  // namespace hdo

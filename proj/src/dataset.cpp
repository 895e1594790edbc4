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

#include "hdo/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hdo {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<double> parse_row(const std::string& line, char delimiter, std::size_t row) {
  std::vector<double> values;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, delimiter)) {
    const std::string token = trim(field);
    if (token.empty()) throw FormatError(row, "empty field");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || errno == ERANGE || !std::isfinite(v)) {
      throw FormatError(row, "cannot parse '" + token + "' as a number");
    }
    values.push_back(v);
  }
  if (!line.empty() && line.back() == delimiter) throw FormatError(row, "trailing delimiter");
  return values;
}

}  // namespace

FormatError::FormatError(std::size_t row, const std::string& what)
    : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}

void validate(const Dataset& data) {
  if (data.features.rows() == 0 || data.features.cols() == 0) {
    throw std::invalid_argument("dataset is empty");
  }
  if (data.labels.size() != data.features.rows()) {
    throw std::invalid_argument("dataset label count does not match sample count");
  }
}

Dataset parse_csv_dataset(std::istream& in, const CsvFormat& format) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  std::size_t width = 0;
  bool header_pending = format.header;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto values = parse_row(trim(line), format.delimiter, row);
    if (values.size() < 2) throw FormatError(row, "need at least one feature and a label");
    if (width == 0) {
      width = values.size();
    } else if (values.size() != width) {
      throw FormatError(row, "expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(values.size()));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(row, "no samples");

  Dataset data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(width - 1);
  data.features.resize(n, d);
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j) data.features(i, j) = r[static_cast<std::size_t>(j)];
    data.labels[i] = r.back();
  }
  return data;
}

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvFormat& format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  return parse_csv_dataset(in, format);
}

void write_csv_dataset(std::ostream& out, const Dataset& data, bool header) {
  validate(data);
  char buf[32];
  if (header) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
    out << "label\n";
  }
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.labels[i]);
    out << buf << '\n';
  }
}

std::vector<std::vector<std::size_t>> balanced_split(const std::vector<std::size_t>& indices,
                                                     int parts) {
  if (parts <= 0) throw std::invalid_argument("balanced_split needs parts >= 1");
  const std::size_t k = static_cast<std::size_t>(parts);
  if (indices.size() < k) {
    throw std::invalid_argument("cannot split " + std::to_string(indices.size()) +
                                " samples into " + std::to_string(k) + " non-empty shards");
  }
  std::vector<std::vector<std::size_t>> shards(k);
  const std::size_t base = indices.size() / k;
  const std::size_t extra = indices.size() % k;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    shards[s].assign(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                     indices.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return shards;
}

DataPartition partition_data(std::size_t samples, int n0, int n1, std::uint64_t seed,
                             PartitionMode mode) {
  if (n0 < 0 || n1 < 0) throw std::invalid_argument("n0 and n1 must be non-negative");
  if (n0 + n1 < 2) throw std::invalid_argument("population needs at least two agents");

  auto shuffled = [samples](std::uint64_t s) {
    std::vector<std::size_t> idx(samples);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(s);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  };

  DataPartition out;
  if (mode == PartitionMode::kWholePopulation) {
    auto shards = balanced_split(shuffled(derive_seed(seed, 0, 0, StreamTag::kPartition)),
                                 n0 + n1);
    out.zo_shards.assign(std::make_move_iterator(shards.begin()),
                         std::make_move_iterator(shards.begin() + n0));
    out.fo_shards.assign(std::make_move_iterator(shards.begin() + n0),
                         std::make_move_iterator(shards.end()));
    return out;
  }
  // Both copies are split from the same shuffle, so a zeroth-order and a
  // first-order population of equal size get identical shards.
  const auto order = shuffled(derive_seed(seed, 0, 0, StreamTag::kPartition));
  if (n0 > 0) out.zo_shards = balanced_split(order, n0);
  if (n1 > 0) out.fo_shards = balanced_split(order, n1);
  return out;
}

DataPartition partition_data(const Dataset& data, int n0, int n1, std::uint64_t seed,
                             PartitionMode mode) {
  validate(data);
  return partition_data(data.size(), n0, n1, seed, mode);
}

Dataset make_synthetic_classification(const SyntheticClassificationParams& params) {
  if (params.samples == 0 || params.dim <= 0) {
    throw std::invalid_argument("synthetic dataset needs samples >= 1 and dim >= 1");
  }
  if (params.label_flip < 0.0 || params.label_flip > 0.5) {
    throw std::invalid_argument("label_flip must lie in [0, 0.5]");
  }
  Rng teacher_rng(derive_seed(params.seed, 0, 0, StreamTag::kData));
  Vector teacher = gaussian_vector(params.dim, teacher_rng);
  teacher *= params.signal / std::max(teacher.norm(), 1e-300);

  Rng rng(derive_seed(params.seed, 1, params.sample_stream, StreamTag::kData));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset data;
  const auto n = static_cast<Eigen::Index>(params.samples);
  data.features.resize(n, params.dim);
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector a = gaussian_vector(params.dim, rng) * params.feature_scale;
    const double p_pos = 1.0 / (1.0 + std::exp(-a.dot(teacher)));
    double y = unit(rng) < p_pos ? 1.0 : -1.0;
    if (unit(rng) < params.label_flip) y = -y;
    data.features.row(i) = a.transpose();
    data.labels[i] = y;
  }
  return data;
}

}  // namespace hdo

#pragma once

// Client-side batch preparation: B copies of every query plus T public samples, shuffled
// under a secret permutation. The ProvenanceMap is client state only; the backend API takes
// the shuffled samples alone.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fusion/model.hpp"

namespace fusion {

struct Sample {
  std::vector<std::int64_t> features;  // fixed point at the model's scale
  std::uint64_t id = 0;
};

struct LabeledSample {
  Sample sample;
  Label label = -1;  // -1 marks an unlabeled query row in CSV input
};

/// Shape of one mixed batch: R queries, B copies each, T publics.
struct BatchShape {
  std::uint64_t R = 0;
  std::uint64_t B = 0;
  std::uint64_t T = 0;

  std::uint64_t N() const { return R * B + T; }
};

struct QueryCopy {
  std::uint64_t query_index = 0;
  std::uint64_t copy_index = 0;
  bool operator==(const QueryCopy&) const = default;
};

struct PublicTag {
  std::uint64_t public_index = 0;
  Label expected_label = 0;
  bool operator==(const PublicTag&) const = default;
};

using PositionTag = std::variant<QueryCopy, PublicTag>;

/// Secret mapping from mixed positions back to (query, copy) or public sample.
/// Canonical order before shuffling: copy (q, c) at q*B + c, public j at R*B + j.
class ProvenanceMap {
 public:
  /// `permutation[canonical] = mixed position`; must be a bijection on [0, N).
  ProvenanceMap(BatchShape shape, std::vector<std::uint64_t> permutation,
                std::vector<Label> public_labels);

  const BatchShape& shape() const noexcept { return shape_; }
  std::span<const std::uint64_t> permutation() const noexcept { return permutation_; }
  const PositionTag& tag(std::size_t position) const { return tags_.at(position); }
  std::uint64_t position_of_copy(std::uint64_t query, std::uint64_t copy) const;
  std::uint64_t position_of_public(std::uint64_t index) const;
  std::vector<std::uint64_t> positions_of_query(std::uint64_t query) const;

 private:
  BatchShape shape_;
  std::vector<std::uint64_t> permutation_;
  std::vector<PositionTag> tags_;
};

struct MixedDataset {
  std::vector<Sample> samples;  // N entries, the only part the server-facing API sees
  ProvenanceMap provenance;
};

/// Fisher-Yates shuffle under Rng(seed); identical seeds give identical orderings.
MixedDataset prepare_mixed(std::span<const Sample> queries, std::span<const LabeledSample> publics,
                           std::uint64_t B, std::uint64_t seed);

struct PublicResult {
  Label label = 0;
  Label expected = 0;
};

struct UnmixedResults {
  std::vector<std::vector<Label>> groups;  // R groups of B labels, ordered by copy index
  std::vector<PublicResult> publics;       // T entries, ordered by public index
};

UnmixedResults unmix(std::span<const Label> results, const ProvenanceMap& provenance);

/// CSV rows: integer label (-1 for query rows) then decimal features. A first row whose first
/// cell is not numeric is treated as a header.
std::vector<LabeledSample> read_csv(const std::filesystem::path& path, int scale_bits);
std::vector<LabeledSample> parse_csv(std::string_view text, int scale_bits);

}  // namespace fusion

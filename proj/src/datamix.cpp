#include "fusion/datamix.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "fusion/error.hpp"
#include "fusion/rng.hpp"

namespace fusion {

ProvenanceMap::ProvenanceMap(BatchShape shape, std::vector<std::uint64_t> permutation,
                             std::vector<Label> public_labels)
    : shape_(shape), permutation_(std::move(permutation)) {
  const std::uint64_t n = shape_.N();
  if (permutation_.size() != n) throw DomainError("provenance: permutation size differs from R*B + T");
  if (public_labels.size() != shape_.T) throw DomainError("provenance: need one label per public sample");
  std::vector<bool> seen(n, false);
  tags_.resize(n);
  const std::uint64_t rb = shape_.R * shape_.B;
  for (std::uint64_t canon = 0; canon < n; ++canon) {
    const std::uint64_t pos = permutation_[canon];
    if (pos >= n || seen[pos]) throw DomainError("provenance: permutation is not a bijection");
    seen[pos] = true;
    if (canon < rb) {
      tags_[pos] = QueryCopy{canon / shape_.B, canon % shape_.B};
    } else {
      tags_[pos] = PublicTag{canon - rb, public_labels[canon - rb]};
    }
  }
}

std::uint64_t ProvenanceMap::position_of_copy(std::uint64_t query, std::uint64_t copy) const {
  if (query >= shape_.R || copy >= shape_.B) throw DomainError("provenance: copy index out of range");
  return permutation_[query * shape_.B + copy];
}

std::uint64_t ProvenanceMap::position_of_public(std::uint64_t index) const {
  if (index >= shape_.T) throw DomainError("provenance: public index out of range");
  return permutation_[shape_.R * shape_.B + index];
}

std::vector<std::uint64_t> ProvenanceMap::positions_of_query(std::uint64_t query) const {
  std::vector<std::uint64_t> out;
  out.reserve(shape_.B);
  for (std::uint64_t c = 0; c < shape_.B; ++c) out.push_back(position_of_copy(query, c));
  return out;
}

MixedDataset prepare_mixed(std::span<const Sample> queries, std::span<const LabeledSample> publics,
                           std::uint64_t B, std::uint64_t seed) {
  if (queries.empty()) throw DomainError("prepare_mixed: no query samples");
  if (B == 0) throw DomainError("prepare_mixed: B must be at least 1");
  const std::size_t dim = queries.front().features.size();
  for (const auto& q : queries) {
    if (q.features.size() != dim) throw DomainError("prepare_mixed: query dimension mismatch");
  }
  for (const auto& p : publics) {
    if (p.sample.features.size() != dim) throw DomainError("prepare_mixed: public sample dimension mismatch");
  }

  const BatchShape shape{queries.size(), B, publics.size()};
  const std::uint64_t n = shape.N();
  std::vector<std::uint64_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::uint64_t{0});
  Rng rng = Rng(seed).derive("mix");
  shuffle(perm.begin(), perm.end(), rng);

  std::vector<Sample> samples(n);
  for (std::uint64_t q = 0; q < shape.R; ++q) {
    for (std::uint64_t c = 0; c < B; ++c) samples[perm[q * B + c]] = queries[q];
  }
  std::vector<Label> labels;
  labels.reserve(shape.T);
  for (std::uint64_t j = 0; j < shape.T; ++j) {
    samples[perm[shape.R * B + j]] = publics[j].sample;
    labels.push_back(publics[j].label);
  }
  return MixedDataset{std::move(samples), ProvenanceMap(shape, std::move(perm), std::move(labels))};
}

UnmixedResults unmix(std::span<const Label> results, const ProvenanceMap& provenance) {
  const BatchShape& shape = provenance.shape();
  if (results.size() != shape.N()) {
    throw DomainError("unmix: got " + std::to_string(results.size()) + " results for a batch of " +
                      std::to_string(shape.N()));
  }
  UnmixedResults out;
  out.groups.assign(shape.R, std::vector<Label>(shape.B));
  out.publics.resize(shape.T);
  for (std::size_t pos = 0; pos < results.size(); ++pos) {
    const auto& tag = provenance.tag(pos);
    if (const auto* q = std::get_if<QueryCopy>(&tag)) {
      out.groups[q->query_index][q->copy_index] = results[pos];
    } else {
      const auto& p = std::get<PublicTag>(tag);
      out.publics[p.public_index] = PublicResult{results[pos], p.expected_label};
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::vector<LabeledSample> parse_csv(std::string_view text, int scale_bits) {
  std::vector<LabeledSample> rows;
  std::stringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_row(line);
    double first = 0.0;
    if (!parse_double(cells[0], first)) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw FormatError("CSV line " + std::to_string(line_no) + ": non-numeric label");
    }
    Label label = 0;
    const auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), label);
    if (ec != std::errc() || ptr != cells[0].data() + cells[0].size() || label < -1) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": label must be an integer >= -1");
    }
    LabeledSample s;
    s.label = label;
    s.sample.id = rows.size();
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw FormatError("CSV line " + std::to_string(line_no) + ": bad feature value \"" + cells[c] + "\"");
      }
      s.sample.features.push_back(to_fixed(v, scale_bits));
    }
    if (rows.empty()) {
      dim = s.sample.features.size();
    } else if (s.sample.features.size() != dim) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": feature count differs from earlier rows");
    }
    rows.push_back(std::move(s));
  }
  return rows;
}

std::vector<LabeledSample> read_csv(const std::filesystem::path& path, int scale_bits) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), scale_bits);
}

}  // namespace fusion

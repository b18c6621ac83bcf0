#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ucores/element.hpp"
#include "ucores/errors.hpp"

namespace ucores {

/// One ordered slice of a Dataset. The index is its position in the owning
/// dataset; element order within a partition is stable.
struct Partition {
  std::size_t index = 0;
  std::vector<Element> elements;
};

/// Immutable partitioned collection of elements. Partition indices are
/// exactly 0..P-1 in order.
class Dataset {
 public:
  Dataset() : id_(next_id()) {}
  explicit Dataset(std::vector<Partition> parts) : id_(next_id()), partitions_(std::move(parts)) {
    for (std::size_t i = 0; i < partitions_.size(); ++i) partitions_[i].index = i;
  }

  std::uint64_t id() const { return id_; }
  const std::vector<Partition>& partitions() const { return partitions_; }
  std::size_t partition_count() const { return partitions_.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const Partition& p : partitions_) n += p.elements.size();
    return n;
  }

  /// Elements in partition-index order, then in-partition order.
  std::vector<Element> collect() const {
    std::vector<Element> out;
    out.reserve(count());
    for (const Partition& p : partitions_) {
      out.insert(out.end(), p.elements.begin(), p.elements.end());
    }
    return out;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::uint64_t id_;
  std::vector<Partition> partitions_;
};

/// Distributes elements over `num_partitions` contiguous slices in input
/// order. Sizes differ by at most one; earlier partitions take the extra
/// element (ceiling-first rule).
inline Dataset create_dataset(std::vector<Element> elements, std::size_t num_partitions) {
  if (num_partitions < 1) {
    throw InvalidPartitionCount("num_partitions must be >= 1, got " +
                                std::to_string(num_partitions));
  }
  const std::size_t n = elements.size();
  const std::size_t base = n / num_partitions;
  const std::size_t extra = n % num_partitions;
  std::vector<Partition> parts(num_partitions);
  std::size_t pos = 0;
  for (std::size_t p = 0; p < num_partitions; ++p) {
    const std::size_t take = base + (p < extra ? 1 : 0);
    parts[p].index = p;
    parts[p].elements.assign(std::make_move_iterator(elements.begin() + pos),
                             std::make_move_iterator(elements.begin() + pos + take));
    pos += take;
  }
  return Dataset(std::move(parts));
}

namespace detail {

// Word boundaries for text ingestion: ASCII space, tab, LF, CR.
inline bool is_delimiter(std::uint8_t b) {
  return b == ' ' || b == '\t' || b == '\n' || b == '\r';
}

// Splits a byte buffer into chunks of roughly `target` bytes. A tentative
// cut is advanced past the next delimiter so no word spans two chunks;
// every chunk therefore ends on a delimiter or at end of input.
inline std::vector<std::pair<std::size_t, std::size_t>> chunk_offsets(
    std::span<const std::uint8_t> data, std::size_t target) {
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  const std::size_t n = data.size();
  std::size_t start = 0;
  while (start < n) {
    std::size_t tentative = start + target;
    if (tentative >= n) {
      chunks.emplace_back(start, n);
      break;
    }
    std::size_t d = tentative;
    while (d < n && !is_delimiter(data[d])) ++d;
    const std::size_t cut = d < n ? d + 1 : n;
    chunks.emplace_back(start, cut);
    start = cut;
  }
  return chunks;
}

}  // namespace detail

/// Ingests a byte file as ByteArray chunks of approximately
/// `target_chunk_bytes`, one chunk per partition. Chunk boundaries never
/// split a word; concatenating the chunks reproduces the file exactly.
inline Dataset create_from_text(const std::string& path, std::size_t target_chunk_bytes) {
  if (target_chunk_bytes < 1) {
    throw InvalidChunkSize("target_chunk_bytes must be >= 1, got " +
                           std::to_string(target_chunk_bytes));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on file: " + path);

  std::vector<Partition> parts;
  for (auto [begin, end] : detail::chunk_offsets(data, target_chunk_bytes)) {
    Partition p;
    p.index = parts.size();
    p.elements.push_back(
        Element::bytes(std::vector<std::uint8_t>(data.begin() + begin, data.begin() + end)));
    parts.push_back(std::move(p));
  }
  return Dataset(std::move(parts));
}

}  // namespace ucores

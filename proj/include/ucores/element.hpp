#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "ucores/errors.hpp"

namespace ucores {

enum class ElementKind : std::uint8_t {
  F32Array = 1,
  F64Array = 2,
  I32Array = 3,
  I64Array = 4,
  ByteArray = 5,
  KeyCountTable = 6,
};

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::F32Array: return "f32";
    case ElementKind::F64Array: return "f64";
    case ElementKind::I32Array: return "i32";
    case ElementKind::I64Array: return "i64";
    case ElementKind::ByteArray: return "bytes";
    case ElementKind::KeyCountTable: return "table";
  }
  return "?";
}

/// One immutable payload cell of a Dataset. Holds exactly one of the
/// device-friendly primitive array variants, or an ordered (key, count)
/// table for word-count style results.
///
/// Equality is bitwise on the payload (floats compare by bit pattern,
/// not by value), which is the contract the executors are held to.
class Element {
 public:
  using KeyCount = std::pair<std::string, std::uint64_t>;
  using Table = std::vector<KeyCount>;

  Element() : payload_(std::vector<std::uint8_t>{}) {}

  static Element f32(std::vector<float> v) { return Element(std::move(v)); }
  static Element f64(std::vector<double> v) { return Element(std::move(v)); }
  static Element i32(std::vector<std::int32_t> v) { return Element(std::move(v)); }
  static Element i64(std::vector<std::int64_t> v) { return Element(std::move(v)); }
  static Element bytes(std::vector<std::uint8_t> v) { return Element(std::move(v)); }
  static Element bytes(std::string_view s) {
    return Element(std::vector<std::uint8_t>(s.begin(), s.end()));
  }

  /// Keys must be unique within one table.
  static Element table(Table t) {
    std::unordered_set<std::string_view> seen;
    for (const auto& [key, count] : t) {
      if (!seen.insert(key).second) {
        throw Error("key count table has duplicate key: " + key);
      }
    }
    return Element(std::move(t));
  }

  ElementKind kind() const {
    return static_cast<ElementKind>(payload_.index() + 1);
  }

  std::span<const float> as_f32() const { return view<std::vector<float>>(); }
  std::span<const double> as_f64() const { return view<std::vector<double>>(); }
  std::span<const std::int32_t> as_i32() const { return view<std::vector<std::int32_t>>(); }
  std::span<const std::int64_t> as_i64() const { return view<std::vector<std::int64_t>>(); }
  std::span<const std::uint8_t> as_bytes() const { return view<std::vector<std::uint8_t>>(); }

  const Table& as_table() const {
    if (const auto* t = std::get_if<Table>(&payload_)) return *t;
    throw ElementKindError(std::string("element is ") + to_string(kind()) + ", not table");
  }

  /// Number of array entries (or table rows).
  std::size_t size() const {
    return std::visit([](const auto& v) { return v.size(); }, payload_);
  }

  /// Payload size in bytes, as it would travel to a device or over the wire.
  std::size_t byte_size() const {
    if (const auto* t = std::get_if<Table>(&payload_)) {
      std::size_t n = 0;
      for (const auto& [key, count] : *t) n += key.size() + sizeof(count);
      return n;
    }
    return std::visit(
        [](const auto& v) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Table>) {
            return 0;  // handled above
          } else {
            return v.size() * sizeof(typename std::decay_t<decltype(v)>::value_type);
          }
        },
        payload_);
  }

  bool operator==(const Element& other) const {
    if (payload_.index() != other.payload_.index()) return false;
    if (const auto* t = std::get_if<Table>(&payload_)) {
      return *t == *std::get_if<Table>(&other.payload_);
    }
    return std::visit(
        [&](const auto& v) {
          const auto& w = std::get<std::decay_t<decltype(v)>>(other.payload_);
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Table>) {
            return v == w;
          } else {
            if (v.size() != w.size()) return false;
            return v.empty() ||
                   std::memcmp(v.data(), w.data(),
                               v.size() * sizeof(typename std::decay_t<decltype(v)>::value_type)) == 0;
          }
        },
        payload_);
  }
  bool operator!=(const Element& other) const { return !(*this == other); }

  /// Concatenates array elements of a single variant in order. Tables do not
  /// concatenate (key uniqueness could not be preserved). Zero elements give
  /// an empty ByteArray, the degenerate case for empty partitions.
  static Element concat(std::span<const Element> parts) {
    if (parts.empty()) return Element::bytes(std::vector<std::uint8_t>{});
    ElementKind k = parts.front().kind();
    if (k == ElementKind::KeyCountTable) {
      throw MixedElementVariants("key count tables are not array elements and cannot concatenate");
    }
    for (const Element& e : parts) {
      if (e.kind() != k) {
        throw MixedElementVariants(std::string("cannot concatenate ") + to_string(k) + " with " +
                                   to_string(e.kind()));
      }
    }
    switch (k) {
      case ElementKind::F32Array: return Element::f32(concat_arrays<float>(parts));
      case ElementKind::F64Array: return Element::f64(concat_arrays<double>(parts));
      case ElementKind::I32Array: return Element::i32(concat_arrays<std::int32_t>(parts));
      case ElementKind::I64Array: return Element::i64(concat_arrays<std::int64_t>(parts));
      default: return Element::bytes(concat_arrays<std::uint8_t>(parts));
    }
  }

 private:
  template <class Vec>
  explicit Element(Vec v) : payload_(std::move(v)) {}

  template <class Vec>
  std::span<const typename Vec::value_type> view() const {
    if (const auto* v = std::get_if<Vec>(&payload_)) return {v->data(), v->size()};
    throw ElementKindError(std::string("element kind mismatch, have ") + to_string(kind()));
  }

  template <class T>
  static std::vector<T> concat_arrays(std::span<const Element> parts) {
    std::vector<T> out;
    std::size_t total = 0;
    for (const Element& e : parts) total += e.size();
    out.reserve(total);
    for (const Element& e : parts) {
      const auto& s = std::get<std::vector<T>>(e.payload_);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }

  std::variant<std::vector<float>, std::vector<double>, std::vector<std::int32_t>,
               std::vector<std::int64_t>, std::vector<std::uint8_t>, Table>
      payload_;
};

}  // namespace ucores

#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"

namespace proxylm {

enum class DistanceKind { geographic, genetic, inventory, syntactic, phonological, featural };

inline constexpr std::array<DistanceKind, 6> kDistanceKinds = {
    DistanceKind::geographic, DistanceKind::genetic,      DistanceKind::inventory,
    DistanceKind::syntactic,  DistanceKind::phonological, DistanceKind::featural};

inline constexpr std::array<std::string_view, 6> kDistanceKindNames = {
    "geographic", "genetic", "inventory", "syntactic", "phonological", "featural"};

constexpr std::string_view to_string(DistanceKind k) { return kDistanceKindNames[static_cast<int>(k)]; }

inline std::optional<DistanceKind> parse_distance_kind(std::string_view s) {
  for (std::size_t i = 0; i < kDistanceKindNames.size(); ++i)
    if (kDistanceKindNames[i] == s) return kDistanceKinds[i];
  return std::nullopt;
}

/// Six typological distances in kDistanceKinds order.
struct LanguageFeatureBlock {
  std::array<double, 6> values{};

  double operator[](DistanceKind k) const { return values[static_cast<int>(k)]; }
  bool operator==(const LanguageFeatureBlock&) const = default;
};

/// Symmetric table of language distances. Immutable once built.
class LanguageDistanceTable {
 public:
  using Key = std::tuple<std::string, std::string, DistanceKind>;

  /// Adds one distance and its mirror. Rejects values outside [0, 1], nonzero
  /// self-distances and conflicting duplicates.
  void insert(const std::string& a, const std::string& b, DistanceKind kind, double distance) {
    if (!std::isfinite(distance) || distance < 0.0 || distance > 1.0)
      throw Error(ErrorCode::range_error, "distance " + csv::format_exact(distance) + " for " + a + "," + b +
                                              " is outside [0, 1]");
    if (a == b && distance != 0.0)
      throw Error(ErrorCode::self_distance_nonzero,
                  "self-distance for " + a + " (" + std::string(to_string(kind)) + ") must be 0");
    for (const auto& key : {Key{a, b, kind}, Key{b, a, kind}}) {
      auto [it, inserted] = entries_.emplace(key, distance);
      if (!inserted && it->second != distance)
        throw Error(ErrorCode::asymmetry_error, "conflicting " + std::string(to_string(kind)) +
                                                    " distances for " + a + "," + b);
    }
  }

  std::optional<double> find(const std::string& a, const std::string& b, DistanceKind kind) const {
    if (a == b) {
      // Self-distance is zero by definition even when not listed.
      return 0.0;
    }
    auto it = entries_.find(Key{a, b, kind});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<Key, double>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<Key, double> entries_;
};

/// Reads `lang_a,lang_b,kind,distance` CSV; the symmetric closure is applied on load.
inline LanguageDistanceTable load_distance_table(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto ca = table.column("lang_a"), cb = table.column("lang_b"), ck = table.column("kind"),
             cd = table.column("distance");
  if (!ca || !cb || !ck || !cd)
    throw Error(ErrorCode::parse_error, "header must be lang_a,lang_b,kind,distance", path, 1);
  LanguageDistanceTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    const std::string a(csv::trim(row[*ca])), b(csv::trim(row[*cb]));
    if (a.empty() || b.empty()) throw Error(ErrorCode::parse_error, "empty language code", path, line);
    const auto kind = parse_distance_kind(csv::trim(row[*ck]));
    if (!kind) throw Error(ErrorCode::parse_error, "unknown distance kind '" + row[*ck] + "'", path, line);
    const auto d = csv::parse_double(row[*cd]);
    if (!d) throw Error(ErrorCode::parse_error, "bad distance '" + row[*cd] + "'", path, line);
    try {
      out.insert(a, b, *kind, *d);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail(), path, line);
    }
  }
  return out;
}

/// Serializes every stored entry (both orientations) in sorted order.
inline std::string format_distance_table(const LanguageDistanceTable& table) {
  std::string out = "lang_a,lang_b,kind,distance\n";
  for (const auto& [key, d] : table.entries()) {
    const auto& [a, b, kind] = key;
    out += csv::join({a, b, std::string(to_string(kind)), csv::format_exact(d)}) + "\n";
  }
  return out;
}

inline LanguageFeatureBlock language_features(const LanguageDistanceTable& table, const std::string& source,
                                              const std::string& target) {
  LanguageFeatureBlock block;
  std::string missing;
  for (std::size_t i = 0; i < kDistanceKinds.size(); ++i) {
    auto d = table.find(source, target, kDistanceKinds[i]);
    if (!d) {
      if (!missing.empty()) missing += ",";
      missing += kDistanceKindNames[i];
      continue;
    }
    block.values[i] = *d;
  }
  if (!missing.empty())
    throw Error(ErrorCode::missing_pair, "no " + missing + " distance for " + source + "," + target);
  return block;
}

}  // namespace proxylm

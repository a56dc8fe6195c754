#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "brwd/lattice.hpp"
#include "brwd/random.hpp"

namespace brwd {

/// One independent Poisson stream family: every site gets its own stream of
/// rate `rate`, keyed by hash(seed, site).
struct DisasterSource {
  std::uint64_t seed = 0;
  double rate = 0.0;
};

/// Immutable descriptor of the random environment. A field is a list of
/// sources whose streams are superposed, so superposition is exact and cheap.
class DisasterField {
 public:
  DisasterField(std::uint64_t seed, double rate, int dim);

  int dimension() const noexcept { return dim_; }
  double rate() const noexcept;
  std::span<const DisasterSource> sources() const noexcept { return sources_; }

  friend DisasterField superpose(const DisasterField& a, const DisasterField& b);

 private:
  DisasterField(std::vector<DisasterSource> sources, int dim);

  std::vector<DisasterSource> sources_;
  int dim_;
};

/// Sorted disaster times at site within [t0, t1).
std::vector<double> disasters_in_window(const DisasterField& field, const Site& site, double t0, double t1);

/// Smallest disaster time in (t, horizon], if any.
std::optional<double> first_disaster_after(const DisasterField& field, const Site& site, double t, double horizon);

/// Per-worker memo of materialized stream prefixes. Streams are generated from
/// time 0 in order, so a query only extends the prefix it needs.
class DisasterCache {
 public:
  explicit DisasterCache(DisasterField field);

  const DisasterField& field() const noexcept { return field_; }

  std::vector<double> in_window(const Site& site, double t0, double t1);

  /// Smallest disaster time in (t, horizon].
  std::optional<double> first_after(const Site& site, double t, double horizon);

  /// Smallest disaster time >= t, or +inf when the field has rate 0.
  double first_at_or_after(const Site& site, double t);

  /// Drops all materialized prefixes.
  void clear();

  std::size_t cached_sites() const noexcept { return sites_.size(); }

 private:
  struct Stream {
    CounterStream gen;
    std::vector<double> times;
  };
  std::vector<Stream>& streams(const Site& site);
  void extend(Stream& s, double rate, double until);

  DisasterField field_;
  std::unordered_map<Site, std::vector<Stream>, SiteHash> sites_;
};

}  // namespace brwd

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>

namespace brwd {

/// Largest supported lattice dimension.
inline constexpr int kMaxDim = 4;

/// A point of Z^d. Unused trailing coordinates are kept at zero so that
/// comparison and hashing do not depend on the dimension.
struct Site {
  std::array<std::int32_t, kMaxDim> x{};

  std::int32_t& operator[](int i) { return x[static_cast<std::size_t>(i)]; }
  std::int32_t operator[](int i) const { return x[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Site&, const Site&) = default;
  friend auto operator<=>(const Site&, const Site&) = default;
};

Site make_site(std::initializer_list<std::int32_t> coords);

/// Throws std::invalid_argument unless 1 <= d <= kMaxDim.
void check_dimension(int d);

/// Nearest neighbour in direction dir in [0, 2d): axis dir/2, sign + for even dir.
Site neighbor(const Site& s, int dir);

Site operator+(const Site& a, const Site& b);
Site operator-(const Site& a, const Site& b);

int sup_norm(const Site& s);

std::uint64_t site_hash(const Site& s) noexcept;

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept { return static_cast<std::size_t>(site_hash(s)); }
};

/// "x1 x2 ... xd" with the given separator.
std::string format_site(const Site& s, int dim, char sep = ' ');

/// Axis-aligned lattice box, inclusive bounds on the first dim coordinates.
struct Region {
  int dim = 1;
  Site lo;
  Site hi;

  bool contains(const Site& s) const noexcept;
  std::size_t volume() const noexcept;

  /// center + {-half_width, ..., half_width}^d
  static Region cube(int dim, int half_width, const Site& center = Site{});
};

/// Sparse particle counts per site. Zero entries are never stored.
using Configuration = std::map<Site, std::int64_t>;

/// per_site particles on every site of center + {-n, ..., n}^d.
Configuration block_configuration(int dim, int n, std::int64_t per_site, const Site& center = Site{});

/// Single site configuration (A = {site}, R particles).
Configuration point_configuration(const Site& site, std::int64_t count = 1);

std::int64_t total_count(const Configuration& c);

/// Multiplies every count by factor.
Configuration scaled(const Configuration& c, std::int64_t factor);

}  // namespace brwd

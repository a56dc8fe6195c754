#include "brwd/lattice.hpp"

#include <cstdlib>
#include <stdexcept>

#include "brwd/random.hpp"

namespace brwd {

Site make_site(std::initializer_list<std::int32_t> coords) {
  if (coords.size() > static_cast<std::size_t>(kMaxDim)) throw std::invalid_argument("too many coordinates");
  Site s;
  int i = 0;
  for (auto c : coords) s[i++] = c;
  return s;
}

void check_dimension(int d) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("dimension must be in [1, " + std::to_string(kMaxDim) + "]");
}

Site neighbor(const Site& s, int dir) {
  Site r = s;
  r[dir / 2] += (dir % 2 == 0) ? 1 : -1;
  return r;
}

Site operator+(const Site& a, const Site& b) {
  Site r;
  for (int i = 0; i < kMaxDim; ++i) r[i] = a[i] + b[i];
  return r;
}

Site operator-(const Site& a, const Site& b) {
  Site r;
  for (int i = 0; i < kMaxDim; ++i) r[i] = a[i] - b[i];
  return r;
}

int sup_norm(const Site& s) {
  int m = 0;
  for (int i = 0; i < kMaxDim; ++i) m = std::max(m, std::abs(s[i]));
  return m;
}

std::uint64_t site_hash(const Site& s) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (int i = 0; i < kMaxDim; ++i) {
    h = mix64(h ^ static_cast<std::uint32_t>(s[i]));
  }
  return h;
}

std::string format_site(const Site& s, int dim, char sep) {
  std::string out;
  for (int i = 0; i < dim; ++i) {
    if (i) out += sep;
    out += std::to_string(s[i]);
  }
  return out;
}

bool Region::contains(const Site& s) const noexcept {
  for (int i = 0; i < dim; ++i) {
    if (s[i] < lo[i] || s[i] > hi[i]) return false;
  }
  return true;
}

std::size_t Region::volume() const noexcept {
  std::size_t v = 1;
  for (int i = 0; i < dim; ++i) {
    if (hi[i] < lo[i]) return 0;
    v *= static_cast<std::size_t>(hi[i] - lo[i] + 1);
  }
  return v;
}

Region Region::cube(int dim, int half_width, const Site& center) {
  check_dimension(dim);
  if (half_width < 0) throw std::invalid_argument("negative half width");
  Region r;
  r.dim = dim;
  for (int i = 0; i < dim; ++i) {
    r.lo[i] = center[i] - half_width;
    r.hi[i] = center[i] + half_width;
  }
  return r;
}

Configuration block_configuration(int dim, int n, std::int64_t per_site, const Site& center) {
  const Region box = Region::cube(dim, n, center);
  Configuration c;
  if (per_site <= 0) return c;
  const int side = 2 * n + 1;
  for (std::size_t idx = 0; idx < box.volume(); ++idx) {
    Site s = box.lo;
    std::size_t rest = idx;
    for (int i = 0; i < dim; ++i) {
      s[i] += static_cast<std::int32_t>(rest % static_cast<std::size_t>(side));
      rest /= static_cast<std::size_t>(side);
    }
    c[s] = per_site;
  }
  return c;
}

Configuration point_configuration(const Site& site, std::int64_t count) {
  Configuration c;
  if (count > 0) c[site] = count;
  return c;
}

std::int64_t total_count(const Configuration& c) {
  std::int64_t t = 0;
  for (const auto& [s, k] : c) t += k;
  return t;
}

Configuration scaled(const Configuration& c, std::int64_t factor) {
  Configuration r;
  if (factor <= 0) return r;
  for (const auto& [s, k] : c) r[s] = k * factor;
  return r;
}

}  // namespace brwd

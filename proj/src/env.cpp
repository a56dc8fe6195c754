#include "brwd/env.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace brwd {

DisasterField::DisasterField(std::uint64_t seed, double rate, int dim) : dim_(dim) {
  check_dimension(dim);
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw std::invalid_argument("disaster rate must be finite and >= 0");
  sources_.push_back({seed, rate});
}

DisasterField::DisasterField(std::vector<DisasterSource> sources, int dim) : sources_(std::move(sources)), dim_(dim) {}

double DisasterField::rate() const noexcept {
  double r = 0.0;
  for (const auto& s : sources_) r += s.rate;
  return r;
}

DisasterField superpose(const DisasterField& a, const DisasterField& b) {
  if (a.dim_ != b.dim_) throw std::invalid_argument("superpose: dimension mismatch");
  std::vector<DisasterSource> all;
  for (const auto& s : a.sources_) {
    if (s.rate > 0) all.push_back(s);
  }
  for (const auto& s : b.sources_) {
    if (s.rate > 0) all.push_back(s);
  }
  if (all.empty()) all.push_back(a.sources_.front());
  return DisasterField(std::move(all), a.dim_);
}

std::vector<double> disasters_in_window(const DisasterField& field, const Site& site, double t0, double t1) {
  DisasterCache cache(field);
  return cache.in_window(site, t0, t1);
}

std::optional<double> first_disaster_after(const DisasterField& field, const Site& site, double t, double horizon) {
  DisasterCache cache(field);
  return cache.first_after(site, t, horizon);
}

DisasterCache::DisasterCache(DisasterField field) : field_(std::move(field)) {}

std::vector<DisasterCache::Stream>& DisasterCache::streams(const Site& site) {
  auto [it, inserted] = sites_.try_emplace(site);
  if (inserted) {
    const auto sources = field_.sources();
    it->second.reserve(sources.size());
    const std::uint64_t h = site_hash(site);
    for (const auto& src : sources) it->second.push_back({CounterStream(derive_seed(src.seed, h)), {}});
  }
  return it->second;
}

void DisasterCache::extend(Stream& s, double rate, double until) {
  if (!(rate > 0.0)) return;
  double last = s.times.empty() ? 0.0 : s.times.back();
  while (s.times.empty() || last < until) {
    last += exponential(s.gen, rate);
    s.times.push_back(last);
  }
}

std::vector<double> DisasterCache::in_window(const Site& site, double t0, double t1) {
  if (!(t0 <= t1)) throw std::invalid_argument("invalid window: t0 > t1");
  std::vector<double> out;
  if (t0 == t1) return out;
  auto& ss = streams(site);
  const auto sources = field_.sources();
  for (std::size_t i = 0; i < ss.size(); ++i) {
    extend(ss[i], sources[i].rate, t1);
    const auto& v = ss[i].times;
    auto lo = std::lower_bound(v.begin(), v.end(), t0);
    auto hi = std::lower_bound(lo, v.end(), t1);
    out.insert(out.end(), lo, hi);
  }
  if (ss.size() > 1) std::sort(out.begin(), out.end());
  return out;
}

std::optional<double> DisasterCache::first_after(const Site& site, double t, double horizon) {
  if (!(t <= horizon)) throw std::invalid_argument("invalid window: t > horizon");
  double best = std::numeric_limits<double>::infinity();
  auto& ss = streams(site);
  const auto sources = field_.sources();
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (!(sources[i].rate > 0.0)) continue;
    extend(ss[i], sources[i].rate, t);
    auto& v = ss[i].times;
    auto it = std::upper_bound(v.begin(), v.end(), t);
    if (it == v.end()) {
      extend(ss[i], sources[i].rate, std::nextafter(v.back(), std::numeric_limits<double>::infinity()));
      it = std::upper_bound(v.begin(), v.end(), t);
    }
    best = std::min(best, *it);
  }
  if (best <= horizon) return best;
  return std::nullopt;
}

double DisasterCache::first_at_or_after(const Site& site, double t) {
  double best = std::numeric_limits<double>::infinity();
  auto& ss = streams(site);
  const auto sources = field_.sources();
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (!(sources[i].rate > 0.0)) continue;
    extend(ss[i], sources[i].rate, t);
    const auto& v = ss[i].times;
    // extend() guarantees the last materialized time is >= t.
    best = std::min(best, *std::lower_bound(v.begin(), v.end(), t));
  }
  return best;
}

void DisasterCache::clear() { sites_.clear(); }

}  // namespace brwd

#include "brwd/boxes.hpp"

#include <algorithm>
#include <cmath>

#include "brwd/parallel.hpp"

namespace brwd {

namespace {

int sign_of(std::int64_t x) { return x >= 0 ? 1 : -1; }

std::size_t orthant_bits(const ExitRegion& r, int dim) {
  std::size_t bits = r.sign < 0 ? 1 : 0;
  for (int j = 0; j + 1 < dim; ++j)
    if (r.theta[j] < 0) bits |= std::size_t{2} << j;
  return bits;
}

ExitRegion from_bits(std::size_t bits, int dim) {
  ExitRegion r;
  r.sign = (bits & 1) ? -1 : 1;
  for (int j = 0; j + 1 < dim; ++j) r.theta[j] = ((bits >> (j + 1)) & 1) ? -1 : 1;
  return r;
}

std::int64_t sup_offset(const SpaceTimeBox& box, const Site& x) {
  std::int64_t m = 0;
  for (int i = 0; i < box.dim; ++i) m = std::max<std::int64_t>(m, std::abs(std::int64_t{x[i]} - box.center[i]));
  return m;
}

void check_start(const SpaceTimeBox& box, const Site& x) {
  if (sup_offset(box, x) >= box.L) throw std::invalid_argument("exit counts: initial particle not strictly inside the box");
}

}  // namespace

void SpaceTimeBox::validate() const {
  check_dimension(dim);
  if (L < 1) throw std::invalid_argument("SpaceTimeBox: L must be at least 1");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("SpaceTimeBox: T must be positive");
}

Region SpaceTimeBox::interior() const { return Region::cube(dim, L - 1, center); }

std::size_t ExitRegion::index(int dim) const {
  const std::size_t bits = orthant_bits(*this, dim);
  return kind == Kind::top ? bits : static_cast<std::size_t>(axis) * (std::size_t{1} << dim) + bits;
}

std::string ExitRegion::to_string(int dim) const {
  std::string s = kind == Kind::top ? "top(" : "face(";
  s += sign > 0 ? '+' : '-';
  if (kind == Kind::face) s += "e" + std::to_string(axis + 1);
  s += ';';
  for (int j = 0; j + 1 < dim; ++j) s += theta[j] > 0 ? '+' : '-';
  s += ')';
  return s;
}

ExitRegion top_region(int dim, std::size_t index) {
  if (index >= (std::size_t{1} << dim)) throw std::out_of_range("top_region: index");
  return from_bits(index, dim);
}

ExitRegion face_region(int dim, std::size_t index) {
  const std::size_t per = std::size_t{1} << dim;
  if (index >= per * static_cast<std::size_t>(dim)) throw std::out_of_range("face_region: index");
  ExitRegion r = from_bits(index % per, dim);
  r.kind = ExitRegion::Kind::face;
  r.axis = static_cast<int>(index / per);
  return r;
}

ExitRegion classify_exit(const SpaceTimeBox& box, double t, const Site& x) {
  const double s = t - box.t0;
  const std::int64_t norm = sup_offset(box, x);
  Site y{};
  for (int i = 0; i < box.dim; ++i) y[i] = x[i] - box.center[i];
  ExitRegion r;
  if (s == box.T && norm <= box.L) {
    r.sign = sign_of(y[0]);
    for (int j = 1; j < box.dim; ++j) r.theta[j - 1] = sign_of(y[j]);
    return r;
  }
  if (!(s >= 0.0 && s < box.T) || norm != box.L) throw std::invalid_argument("classify_exit: point not on the boundary");
  r.kind = ExitRegion::Kind::face;
  int axis = 0;
  while (std::abs(y[axis]) != box.L) ++axis;
  r.axis = axis;
  r.sign = sign_of(y[axis]);
  int k = 0;
  for (int j = 0; j < box.dim; ++j)
    if (j != axis) r.theta[k++] = sign_of(y[j]);
  return r;
}

ExitCounts::ExitCounts(int d)
    : dim(d), M(std::size_t{1} << d, 0), N(static_cast<std::size_t>(d) * (std::size_t{1} << d), 0) {}

std::int64_t ExitCounts::sum_M() const {
  std::int64_t s = 0;
  for (auto v : M) s += v;
  return s;
}

std::int64_t ExitCounts::sum_N() const {
  std::int64_t s = 0;
  for (auto v : N) s += v;
  return s;
}

void ExitCounts::add(const ExitRegion& r) {
  auto& v = r.kind == ExitRegion::Kind::top ? M : N;
  ++v[r.index(dim)];
}

ExitCounts exit_counts(const EventLog& log, const SpaceTimeBox& box) {
  box.validate();
  if (log.dim != box.dim) throw std::invalid_argument("exit_counts: dimension mismatch");
  const double end = box.t0 + box.T;
  if (log.start_time != box.t0 || log.horizon < end || log.capped)
    throw std::invalid_argument("exit_counts: log does not cover the box");
  const auto recs = particle_records(log);
  ExitCounts out(box.dim);
  std::vector<char> touched(recs.size(), 0);
  for (std::size_t v = 0; v < recs.size(); ++v) {
    const auto& rec = recs[v];
    const std::uint64_t parent = log.nodes[v].parent;
    if (parent == kNoNode) check_start(box, rec.path.start);
    // Nodes are numbered in creation order, so the parent is already done.
    if (parent != kNoNode && touched[parent]) {
      touched[v] = 1;
      continue;
    }
    if (rec.birth_time >= end) continue;
    Site pos = rec.path.start;
    for (const auto& j : rec.path.jumps) {
      if (j.time >= end) break;
      pos = j.site;
      if (sup_offset(box, pos) >= box.L) {
        out.add(classify_exit(box, j.time, pos));
        touched[v] = 1;
        break;
      }
    }
    if (!touched[v] && rec.end_time >= end) out.add(classify_exit(box, end, pos));
  }
  return out;
}

namespace {

class ExitObserver final : public SimObserver {
 public:
  ExitObserver(const SpaceTimeBox& box, ExitCounts& counts) : box_(box), counts_(counts) {}
  void on_start(double, const PopulationView&) override {}
  void on_event(const Event& ev, const PopulationView&) override {
    if (ev.kind == EventKind::exit) counts_.add(classify_exit(box_, ev.time, ev.site));
  }

 private:
  const SpaceTimeBox& box_;
  ExitCounts& counts_;
};

}  // namespace

ExitCounts simulate_exit_counts(const BrwParams& params, const Configuration& eta, DisasterCache& cache,
                                const SpaceTimeBox& box, std::uint64_t seed, const Caps& caps) {
  box.validate();
  if (params.dim != box.dim) throw std::invalid_argument("simulate_exit_counts: dimension mismatch");
  for (const auto& [site, c] : eta) check_start(box, site);
  ExitCounts out(box.dim);
  ExitObserver obs(box, out);
  SimOptions opt;
  opt.start_time = box.t0;
  opt.horizon = box.t0 + box.T;
  opt.truncation = box.interior();
  opt.caps = caps;
  opt.keep_final = true;
  opt.observer = &obs;
  const auto res = simulate(params, eta, cache, opt, seed);
  out.capped = res.capped;
  for (const auto& [site, c] : res.final_counts) {
    const auto r = classify_exit(box, opt.horizon, site);
    out.M[r.index(box.dim)] += c;
  }
  return out;
}

std::vector<NamedFunctional> fkg_functional_suite(int dim) {
  std::vector<NamedFunctional> s;
  s.push_back({"total", [](const ExitCounts& c) { return static_cast<double>(c.sum_M() + c.sum_N()); }});
  s.push_back({"sum_top", [](const ExitCounts& c) { return static_cast<double>(c.sum_M()); }});
  s.push_back({"sum_face", [](const ExitCounts& c) { return static_cast<double>(c.sum_N()); }});
  s.push_back({"any_top", [](const ExitCounts& c) { return c.sum_M() >= 1 ? 1.0 : 0.0; }});
  s.push_back({"top_ge_3", [](const ExitCounts& c) { return c.sum_M() >= 3 ? 1.0 : 0.0; }});
  s.push_back({"total_ge_2", [](const ExitCounts& c) { return c.sum_M() + c.sum_N() >= 2 ? 1.0 : 0.0; }});
  s.push_back({"first_top_orthant", [](const ExitCounts& c) { return static_cast<double>(c.M.front()); }});
  s.push_back({"last_face_orthant_hit", [](const ExitCounts& c) { return c.N.back() >= 1 ? 1.0 : 0.0; }});
  (void)dim;
  return s;
}

namespace {

struct FkgRep {
  ExitCounts a, b;
};

std::vector<FkgRep> fkg_replicas(const BrwParams& params, const Configuration& eta1, const Configuration& eta2,
                                 const SpaceTimeBox& box, std::size_t n_reps, std::uint64_t seed,
                                 const ReplicaOptions& ro) {
  params.validate();
  if (n_reps < 2) throw std::invalid_argument("fkg_test: need at least two replicas");
  return parallel_map(n_reps, ro.threads, [&](std::size_t r) {
    const DisasterField field(derive_seed(seed, "fkg-field", r), params.alpha, params.dim);
    DisasterCache cache(field);
    auto a = simulate_exit_counts(params, eta1, cache, box, derive_seed(seed, "fkg-tree1", r), ro.caps);
    auto b = simulate_exit_counts(params, eta2, cache, box, derive_seed(seed, "fkg-tree2", r), ro.caps);
    return FkgRep{std::move(a), std::move(b)};
  });
}

FkgEstimate plug_in_covariance(const std::vector<FkgRep>& reps, const CountFunctional& f, const CountFunctional& g) {
  FkgEstimate est;
  est.n_reps = reps.size();
  const double n = static_cast<double>(reps.size());
  std::vector<double> fv(reps.size()), gv(reps.size());
  for (std::size_t i = 0; i < reps.size(); ++i) {
    fv[i] = f(reps[i].a);
    gv[i] = g(reps[i].b);
    est.mean_f += fv[i] / n;
    est.mean_g += gv[i] / n;
    est.capped += reps[i].a.capped || reps[i].b.capped;
  }
  double cov = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i) cov += (fv[i] - est.mean_f) * (gv[i] - est.mean_g);
  est.cov = cov / n;
  // Influence function of the plug-in covariance. For rare indicators with no
  // joint occurrence it collapses far below the true spread, so the variance
  // is floored at its value under independence, Var f Var g.
  double var = 0.0, var_f = 0.0, var_g = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const double psi = (fv[i] - est.mean_f) * (gv[i] - est.mean_g) - est.cov;
    var += psi * psi;
    var_f += (fv[i] - est.mean_f) * (fv[i] - est.mean_f);
    var_g += (gv[i] - est.mean_g) * (gv[i] - est.mean_g);
  }
  const double floor = (var_f / n) * (var_g / n);
  est.std_err = std::sqrt(std::max(var / (n - 1.0), floor) / n);
  return est;
}

}  // namespace

FkgEstimate fkg_test(const BrwParams& params, const Configuration& eta1, const Configuration& eta2,
                     const SpaceTimeBox& box, const CountFunctional& f, const CountFunctional& g,
                     std::size_t n_reps, std::uint64_t seed, const ReplicaOptions& ro) {
  return plug_in_covariance(fkg_replicas(params, eta1, eta2, box, n_reps, seed, ro), f, g);
}

std::vector<FkgEstimate> fkg_suite_test(const BrwParams& params, const Configuration& eta1,
                                        const Configuration& eta2, const SpaceTimeBox& box,
                                        const std::vector<NamedFunctional>& suite, std::size_t n_reps,
                                        std::uint64_t seed, const ReplicaOptions& ro) {
  const auto reps = fkg_replicas(params, eta1, eta2, box, n_reps, seed, ro);
  std::vector<FkgEstimate> out;
  out.reserve(suite.size() * suite.size());
  for (const auto& f : suite)
    for (const auto& g : suite) out.push_back(plug_in_covariance(reps, f.fn, g.fn));
  return out;
}

Lemma47Result lemma47_check(std::span<const double> joint, int S) {
  const auto sides = lemma47_sides<double>(joint, S);
  return {sides.lhs <= sides.rhs + 1e-12, sides.rhs - sides.lhs};
}

namespace {

struct ProductEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Product of the means of indicator columns, with a delta-method error that
// keeps their covariance (the columns come from the same replicas).
ProductEstimate product_of_means(const std::vector<std::vector<double>>& cols) {
  const std::size_t k = cols.size(), n = cols.front().size();
  std::vector<double> p(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (double x : cols[i]) p[i] += x;
    p[i] /= static_cast<double>(n);
  }
  ProductEstimate out{1.0, 0.0};
  for (double v : p) out.value *= v;
  std::vector<double> grad(k, 1.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) grad[i] *= p[j];
  double var = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double c = 0.0;
      for (std::size_t r = 0; r < n; ++r) c += (cols[i][r] - p[i]) * (cols[j][r] - p[j]);
      var += grad[i] * grad[j] * c / static_cast<double>(n - 1);
    }
  out.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  return out;
}

double lemma47_term(double factors, int S) { return std::pow(1.0 - 1.0 / factors, factors * S); }

}  // namespace

Corollary49Report corollary49_check(const BrwParams& params, const Configuration& eta, const SpaceTimeBox& box,
                                    std::int64_t K, std::int64_t K2, int S, std::size_t n_reps,
                                    std::uint64_t seed, const ReplicaOptions& ro) {
  params.validate();
  box.validate();
  if (S < 0) throw std::invalid_argument("corollary49_check: S must be nonnegative");
  if (n_reps < 2) throw std::invalid_argument("corollary49_check: need at least two replicas");
  const Configuration scaled_eta = scaled(eta, S);
  auto run = [&](const Configuration& start, std::string_view tag) {
    const std::uint64_t base = derive_seed(seed, tag);
    return parallel_map(n_reps, ro.threads, [&](std::size_t r) {
      const DisasterField field(derive_seed(base, "field", r), params.alpha, params.dim);
      DisasterCache cache(field);
      return simulate_exit_counts(params, start, cache, box, derive_seed(base, "tree", r), ro.caps);
    });
  };
  const auto big = run(scaled_eta, "scaled");
  const auto small = run(eta, "single");

  Corollary49Report rep;
  rep.n_reps = n_reps;
  for (const auto& c : big) rep.capped += c.capped;
  for (const auto& c : small) rep.capped += c.capped;

  const int d = box.dim;
  const double tops = static_cast<double>(std::size_t{1} << d), faces = d * tops;
  auto indicator = [&](const std::vector<ExitCounts>& v, auto pred) {
    std::vector<double> col;
    col.reserve(v.size());
    for (const auto& c : v) col.push_back(pred(c) ? 1.0 : 0.0);
    return col;
  };
  auto finish = [&](ProductBound b, const std::vector<std::vector<double>>& lhs_cols, const std::vector<double>& rhs_col) {
    const auto l = product_of_means(lhs_cols);
    const auto r = product_of_means({rhs_col});
    b.lhs = l.value;
    b.lhs_se = l.se;
    b.rhs_prob = r.value;
    b.rhs_prob_se = r.se;
    const double slack = 3.0 * std::hypot(l.se, r.se);
    b.violated = b.lhs > b.rhs_prob + b.additive + slack;
    b.violated_displayed = b.lhs > b.rhs_prob + b.additive_displayed + slack;
    rep.bounds.push_back(std::move(b));
  };

  {
    std::vector<std::vector<double>> cols;
    for (std::size_t i = 0; i < static_cast<std::size_t>(tops); ++i)
      cols.push_back(indicator(big, [&](const ExitCounts& c) { return c.M[i] <= K; }));
    ProductBound b;
    b.name = "top_orthants";
    b.additive = lemma47_term(tops, S);
    b.additive_displayed = std::pow(tops, -tops * S);
    const auto limit = static_cast<std::int64_t>(tops) * K;
    finish(std::move(b), cols, indicator(small, [&](const ExitCounts& c) { return c.sum_M() <= limit; }));
  }
  {
    std::vector<std::vector<double>> cols;
    for (std::size_t i = 0; i < static_cast<std::size_t>(faces); ++i)
      cols.push_back(indicator(big, [&](const ExitCounts& c) { return c.N[i] <= K; }));
    ProductBound b;
    b.name = "face_orthants";
    b.additive = lemma47_term(faces, S);
    b.additive_displayed = std::pow(faces, -faces * S);
    const auto limit = static_cast<std::int64_t>(faces) * K;
    finish(std::move(b), cols, indicator(small, [&](const ExitCounts& c) { return c.sum_N() <= limit; }));
  }
  {
    std::vector<std::vector<double>> cols{indicator(big, [&](const ExitCounts& c) { return c.sum_N() <= K; }),
                                          indicator(big, [&](const ExitCounts& c) { return c.sum_M() <= K2; })};
    ProductBound b;
    b.name = "sums";
    b.additive = lemma47_term(2.0, S);
    b.additive_displayed = std::pow(4.0, -S);
    finish(std::move(b), cols,
           indicator(small, [&](const ExitCounts& c) { return c.sum_M() + c.sum_N() <= K + K2; }));
  }
  return rep;
}

}  // namespace brwd

#include "hypoot/sde_particles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "hypoot/errors.hpp"

namespace hypoot {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += W0;
      k[1] += W1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

namespace {

double open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::pair<double, double> gaussian_pair(std::uint64_t seed, std::uint64_t particle,
                                        std::uint64_t step, std::uint32_t stream) {
  const std::array<std::uint32_t, 4> ctr{
      static_cast<std::uint32_t>(particle), static_cast<std::uint32_t>(particle >> 32),
      static_cast<std::uint32_t>(step),
      (stream << 24) ^ static_cast<std::uint32_t>(step >> 32)};
  const auto r = philox4x32(ctr, {static_cast<std::uint32_t>(seed),
                                  static_cast<std::uint32_t>(seed >> 32)});
  const double u1 = open_unit(r[0], r[1]);
  const double u2 = open_unit(r[2], r[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  return {rad * std::cos(th), rad * std::sin(th)};
}

namespace {

constexpr std::uint32_t kInitStream = 1;
constexpr std::uint32_t kNoiseStream = 0;

double psi_floor(const Potential& U) {
  const double R = U.psi.support_radius();
  double m = 0.0;  // psi vanishes outside the support
  for (int k = 0; k <= 2000 && R > 0.0; ++k) m = std::min(m, U.psi.value(-R + 2.0 * R * k / 2000));
  return m;
}

Vec2 draw_initial(const InitSpec& init, const Potential& U, double pmin, std::uint64_t seed,
                  std::uint64_t k) {
  switch (init.kind) {
    case InitSpec::Kind::point:
      return init.mean;
    case InitSpec::Kind::gaussian: {
      if (!init.cov.is_spd()) throw Error(ErrorKind::not_spd, "initial covariance must be SPD");
      const auto [n1, n2] = gaussian_pair(seed, k, 0, kInitStream);
      // Cholesky of the 2x2 covariance
      const double l11 = std::sqrt(init.cov.xx);
      const double l21 = init.cov.xv / l11;
      const double l22 = std::sqrt(init.cov.vv - l21 * l21);
      return {init.mean.x + l11 * n1, init.mean.v + l21 * n1 + l22 * n2};
    }
    case InitSpec::Kind::equilibrium: {
      const double sx = 1.0 / std::sqrt(U.alpha);
      for (std::uint64_t attempt = 0; attempt < (1u << 20); ++attempt) {
        const auto [nx, nv] = gaussian_pair(seed, k, 2 * attempt, kInitStream);
        const double x = sx * nx;
        const double accept = std::exp(-(U.psi.value(x) - pmin));
        if (accept >= 1.0) return {x, nv};
        const auto [a, b] = gaussian_pair(seed, k, 2 * attempt + 1, kInitStream);
        (void)b;
        // uniform from a normal draw through its CDF
        const double u = 0.5 * std::erfc(-a / std::numbers::sqrt2);
        if (u < accept) return {x, nv};
      }
      throw Error(ErrorKind::no_convergence, "equilibrium rejection sampler exhausted");
    }
  }
  return {};
}

void check_run(std::size_t n, double dt, double t_end) {
  if (n < 1 || !(dt > 0.0) || !(t_end >= 0.0) || !std::isfinite(dt) || !std::isfinite(t_end)) {
    throw Error(ErrorKind::invalid_parameter, "simulation needs n >= 1, dt > 0, t_end >= 0");
  }
}

inline double noise(std::uint64_t seed, std::uint64_t k, long step) {
  const auto pr = gaussian_pair(seed, k, static_cast<std::uint64_t>(step) / 2, kNoiseStream);
  return (step % 2 == 0) ? pr.first : pr.second;
}

inline void em_step(const Potential& U, Vec2& z, double dt, double kick) {
  const double x = z.x, v = z.v;
  z.x = x + v * dt;
  z.v = v + (-U.dU(x) - v) * dt + kick;
}

}  // namespace

Vec2 sample_initial(const InitSpec& init, const Potential& U, std::uint64_t seed, std::uint64_t k) {
  return draw_initial(init, U, psi_floor(U), seed, k);
}

ParticleEnsemble simulate(const Potential& U, std::size_t n, double dt, double t_end,
                          std::uint64_t seed, const InitSpec& init) {
  check_run(n, dt, t_end);
  const long steps = std::lround(t_end / dt);
  const double pmin = psi_floor(U);
  const double amp = std::sqrt(2.0 * dt);
  ParticleEnsemble e;
  e.seed = seed;
  e.time = static_cast<double>(steps) * dt;
  e.states.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vec2 z = draw_initial(init, U, pmin, seed, k);
    for (long s = 0; s < steps; ++s) em_step(U, z, dt, amp * noise(seed, k, s));
    e.states[k] = z;
  }
  return e;
}

PairedRun synchronous_pair(const Potential& U, std::size_t n, double dt, double t_end,
                           std::uint64_t seed, const InitSpec& init_f, const InitSpec& init_g,
                           const TwistMatrix& A, int record_every) {
  check_run(n, dt, t_end);
  if (record_every < 1) throw Error(ErrorKind::invalid_parameter, "record_every must be >= 1");
  const long steps = std::lround(t_end / dt);
  const double pmin = psi_floor(U);
  const double amp = std::sqrt(2.0 * dt);

  PairedRun out;
  out.f.seed = out.g.seed = seed;
  out.f.time = out.g.time = static_cast<double>(steps) * dt;
  out.f.states.resize(n);
  out.g.states.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.f.states[k] = draw_initial(init_f, U, pmin, seed, k);
    out.g.states[k] = draw_initial(init_g, U, pmin, seed, k);
  }
  std::vector<double> d2(n);
  auto record = [&](long s) {
    for (std::size_t k = 0; k < n; ++k) d2[k] = norm_sq(A, out.f.states[k] - out.g.states[k]);
    out.msd.emplace_back(static_cast<double>(s) * dt, pairwise_sum(d2) / static_cast<double>(n));
  };
  record(0);
  // time-major so the record points see all particles at the same step
  for (long s = 0; s < steps; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const double kick = amp * noise(seed, k, s);
      em_step(U, out.f.states[k], dt, kick);
      em_step(U, out.g.states[k], dt, kick);
    }
    if ((s + 1) % record_every == 0 || s + 1 == steps) record(s + 1);
  }
  return out;
}

EmpiricalDensity empirical_density(const ParticleEnsemble& e, const PhaseGrid& grid) {
  std::vector<double> counts(grid.cells(), 0.0);
  std::size_t outside = 0;
  for (const auto& z : e.states) {
    const double fi = (z.x + grid.Lx) / grid.dx();
    const double fj = (z.v + grid.Lv) / grid.dv();
    if (!(fi >= 0.0 && fi < grid.nx && fj >= 0.0 && fj < grid.nv)) {
      ++outside;
      continue;
    }
    counts[grid.index(static_cast<int>(fi), static_cast<int>(fj))] += 1.0;
  }
  const double frac = e.size() ? static_cast<double>(outside) / static_cast<double>(e.size()) : 0.0;
  if (outside == e.size()) {
    return {DensityGrid::unnormalized(grid, std::move(counts)), outside, frac};
  }
  return {DensityGrid::normalized(grid, std::move(counts)), outside, frac};
}

void write_ensemble(const std::string& path, const ParticleEnsemble& e) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << "# hypoot-ensemble v1\n" << std::setprecision(17);
  out << e.size() << " " << e.time << " " << e.seed << "\n";
  for (const auto& z : e.states) out << z.x << " " << z.v << "\n";
}

void write_paired_csv(const std::string& path, const std::vector<std::pair<double, double>>& msd) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << "t,msd_A\n" << std::setprecision(17);
  for (const auto& [t, d] : msd) out << t << "," << d << "\n";
}

}  // namespace hypoot

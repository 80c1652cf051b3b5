#include "hypoot/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hypoot/errors.hpp"
#include "json.hpp"

namespace hypoot {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::parse_error, (path.empty() ? std::string("config") : path) + ": " + what);
}

// A JSON object whose keys must all be consumed before finish().
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void num(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(at(key), "not finite");
    }
  }

  template <class I>
  void integer(const std::string& key, I& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer() && !v->is_number_unsigned()) fail(at(key), "expected an integer");
      if constexpr (std::is_unsigned_v<I>) {
        if (v->is_number_integer() && v->get<long long>() < 0) fail(at(key), "must be nonnegative");
      }
      out = v->get<I>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <class E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
    std::string s;
    string(key, s);
    if (!has(key)) return;
    for (const auto& [name, value] : options) {
      if (s == name) {
        out = value;
        return;
      }
    }
    std::string allowed;
    for (const auto& o : options) allowed += std::string(allowed.empty() ? "" : ", ") + o.first;
    fail(at(key), "unknown value \"" + s + "\" (allowed: " + allowed + ")");
  }

  void vec2(const std::string& key, Vec2& out) {
    if (const json* v = raw(key)) out = parse_vec2(*v, at(key));
  }

  void sym2(const std::string& key, Sym2& out) {
    if (const json* v = raw(key)) {
      const std::string p = at(key);
      if (!v->is_array() || v->size() != 2) fail(p, "expected [[xx, xv], [xv, vv]]");
      const Vec2 r0 = parse_vec2((*v)[0], p + "[0]");
      const Vec2 r1 = parse_vec2((*v)[1], p + "[1]");
      if (r0.v != r1.x) fail(p, "matrix is not symmetric");
      out = {r0.x, r0.v, r1.v};
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(at(key), "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  std::optional<Obj> child(const std::string& key) {
    if (const json* v = raw(key)) return Obj(*v, at(key));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      (void)v;
      if (!seen_.count(k)) fail(at(k), "unknown key");
    }
  }

  static Vec2 parse_vec2(const json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) fail(p, "expected [x, v]");
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(path, what);
}

InitialSpec parse_initial(Obj o) {
  InitialSpec s;
  o.choice<InitialSpec::Kind>("kind", s.kind,
                              {{"gaussian", InitialSpec::Kind::gaussian},
                               {"equilibrium", InitialSpec::Kind::equilibrium},
                               {"shifted_equilibrium", InitialSpec::Kind::shifted_equilibrium},
                               {"slow_mode", InitialSpec::Kind::slow_mode},
                               {"point", InitialSpec::Kind::point}});
  o.vec2("mean", s.mean);
  o.sym2("cov", s.cov);
  o.vec2("shift", s.shift);
  o.num("amplitude", s.amplitude);
  o.finish();
  if (s.kind == InitialSpec::Kind::gaussian) require(s.cov.is_spd(), o.at("cov"), "must be positive definite");
  return s;
}

json vec_json(Vec2 z) { return json::array({z.x, z.v}); }
json sym_json(const Sym2& s) { return json::array({json::array({s.xx, s.xv}), json::array({s.xv, s.vv})}); }

const char* initial_name(InitialSpec::Kind k) {
  switch (k) {
    case InitialSpec::Kind::gaussian: return "gaussian";
    case InitialSpec::Kind::equilibrium: return "equilibrium";
    case InitialSpec::Kind::shifted_equilibrium: return "shifted_equilibrium";
    case InitialSpec::Kind::slow_mode: return "slow_mode";
    case InitialSpec::Kind::point: return "point";
  }
  return "?";
}

json initial_json(const InitialSpec& s) {
  return {{"kind", initial_name(s.kind)}, {"mean", vec_json(s.mean)}, {"cov", sym_json(s.cov)},
          {"shift", vec_json(s.shift)}, {"amplitude", s.amplitude}};
}

const char* method_name(OtMethod m) { return m == OtMethod::exact ? "exact" : "sinkhorn"; }

double slow_eigenvalue(double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.25))
    throw Error(ErrorKind::invalid_parameter, "slow_mode needs a real slow eigenvalue (0 < alpha <= 1/4)");
  return (-1.0 + std::sqrt(1.0 - 4.0 * alpha)) / 2.0;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Obj o(root, "");
  require(o.has("schema_version"), "schema_version", "missing");
  o.integer("schema_version", cfg.schema_version);
  require(cfg.schema_version == kConfigSchemaVersion, "schema_version",
          "unsupported version " + std::to_string(cfg.schema_version));
  o.string("name", cfg.name);
  o.integer("seed", cfg.seed);
  o.string("output_dir", cfg.output_dir);

  if (auto p = o.child("potential")) {
    p->num("alpha", cfg.potential.alpha);
    if (auto q = p->child("perturbation")) {
      q->choice<PotentialSpec::Kind>("kind", cfg.potential.kind,
                                     {{"none", PotentialSpec::Kind::none},
                                      {"novoid", PotentialSpec::Kind::novoid},
                                      {"novoid_search", PotentialSpec::Kind::novoid_search},
                                      {"table", PotentialSpec::Kind::table}});
      q->num("scale", cfg.potential.scale);
      q->string("path", cfg.potential.path);
      q->finish();
    }
    p->finish();
    const auto& ps = cfg.potential;
    if (ps.kind != PotentialSpec::Kind::novoid_search) require(ps.alpha > 0.0, "potential.alpha", "must be positive");
    if (ps.kind == PotentialSpec::Kind::novoid)
      require(ps.scale > 0.0, "potential.perturbation.scale", "must be positive");
    if (ps.kind == PotentialSpec::Kind::table)
      require(!ps.path.empty(), "potential.perturbation.path", "required for a table");
  }

  if (auto m = o.child("matrix")) {
    auto& ms = cfg.matrix;
    m->choice<MatrixSpec::Kind>("kind", ms.kind,
                                {{"theorem", MatrixSpec::Kind::theorem},
                                 {"explicit", MatrixSpec::Kind::explicit_abc},
                                 {"identity", MatrixSpec::Kind::identity}});
    double x = 0.0;
    if (m->has("c_scale")) {
      m->num("c_scale", x);
      require(x > 0.0, m->at("c_scale"), "must be positive");
      ms.c_scale = x;
    }
    if (m->has("c_fraction")) {
      m->num("c_fraction", x);
      require(x > 0.0 && x < 1.0, m->at("c_fraction"), "must lie in (0, 1)");
      ms.c_fraction = x;
    }
    m->num("a", ms.a);
    m->num("b", ms.b);
    m->num("c", ms.c);
    m->finish();
    require(!(ms.c_scale && ms.c_fraction), "matrix", "give c_scale or c_fraction, not both");
  }

  if (auto g = o.child("grid")) {
    g->integer("n", cfg.grid.n);
    g->integer("nx", cfg.grid.nx);
    g->integer("nv", cfg.grid.nv);
    g->num("Lx", cfg.grid.Lx);
    g->num("Lv", cfg.grid.Lv);
    g->finish();
    require(cfg.grid.n >= 4, "grid.n", "must be at least 4");
    require(cfg.grid.nx == 0 || cfg.grid.nx >= 4, "grid.nx", "must be at least 4");
    require(cfg.grid.nv == 0 || cfg.grid.nv >= 4, "grid.nv", "must be at least 4");
    require(cfg.grid.Lx >= 0.0 && cfg.grid.Lv >= 0.0, "grid", "extents must be nonnegative");
    require((cfg.grid.Lx > 0.0) == (cfg.grid.Lv > 0.0), "grid", "give both Lx and Lv or neither");
  }

  if (auto i = o.child("initial")) cfg.initial = parse_initial(std::move(*i));

  if (auto s = o.child("solver")) {
    auto& ss = cfg.solver;
    s->num("dt", ss.dt);
    s->num("cfl_fraction", ss.cfl_fraction);
    s->num("t_end", ss.t_end);
    s->numbers("snapshot_times", ss.snapshot_times);
    s->num("snapshot_every", ss.snapshot_every);
    s->choice<Splitting>("splitting", ss.splitting, {{"strang", Splitting::strang}, {"lie", Splitting::lie}});
    s->choice<VelocityScheme>("velocity", ss.velocity,
                              {{"exponential", VelocityScheme::exponential},
                               {"implicit_euler", VelocityScheme::implicit_euler}});
    s->finish();
    require(ss.dt >= 0.0, "solver.dt", "must be nonnegative");
    require(ss.cfl_fraction > 0.0 && ss.cfl_fraction <= 1.0, "solver.cfl_fraction", "must lie in (0, 1]");
    require(ss.t_end >= 0.0, "solver.t_end", "must be nonnegative");
    require(ss.snapshot_every > 0.0, "solver.snapshot_every", "must be positive");
    for (std::size_t k = 0; k < ss.snapshot_times.size(); ++k) {
      const double t = ss.snapshot_times[k];
      require(t >= 0.0 && t <= ss.t_end, "solver.snapshot_times", "times must lie in [0, t_end]");
      require(k == 0 || t > ss.snapshot_times[k - 1], "solver.snapshot_times", "times must increase");
    }
  }

  if (auto t = o.child("transport")) {
    auto& ts = cfg.transport;
    t->choice<OtMethod>("method", ts.method, {{"exact", OtMethod::exact}, {"sinkhorn", OtMethod::sinkhorn}});
    t->num("eps_rel", ts.eps_rel);
    t->integer("max_cells", ts.max_cells);
    t->num("mass_floor", ts.mass_floor);
    t->boolean("compute_j", ts.compute_j);
    t->integer("j_levels", ts.j_levels);
    t->num("eps_cells", ts.eps_cells);
    t->finish();
    require(ts.eps_rel > 0.0, "transport.eps_rel", "must be positive");
    require(ts.max_cells == 0 || ts.max_cells >= 16, "transport.max_cells", "must be 0 or at least 16");
    require(ts.mass_floor >= 0.0 && ts.mass_floor <= 1e-6, "transport.mass_floor", "must lie in [0, 1e-6]");
    require(ts.j_levels >= 1 && ts.j_levels <= 6, "transport.j_levels", "must lie in [1, 6]");
    require(ts.eps_cells > 0.0, "transport.eps_cells", "must be positive");
  }

  if (auto d = o.child("decay")) {
    auto& ds = cfg.decay;
    d->num("fit_from", ds.fit_from);
    d->num("fit_to", ds.fit_to);
    d->num("monotone_tol", ds.monotone_tol);
    d->num("min_r_squared", ds.min_r_squared);
    d->boolean("write_snapshots", ds.write_snapshots);
    d->finish();
    require(ds.fit_to > ds.fit_from, "decay", "fit_to must exceed fit_from");
    require(ds.monotone_tol >= 0.0, "decay.monotone_tol", "must be nonnegative");
  }

  if (auto d = o.child("dissipation")) {
    auto& ds = cfg.dissipation;
    d->choice<OtMethod>("method", ds.method, {{"exact", OtMethod::exact}, {"sinkhorn", OtMethod::sinkhorn}});
    d->integer("max_cells", ds.max_cells);
    d->num("tol_factor", ds.tol_factor);
    d->boolean("gaussian_oracle", ds.gaussian_oracle);
    d->boolean("key_check", ds.key_check);
    d->finish();
    require(ds.max_cells >= 16, "dissipation.max_cells", "must be at least 16");
    require(ds.tol_factor > 0.0, "dissipation.tol_factor", "must be positive");
  }

  if (auto s = o.child("sde")) {
    auto& ss = cfg.sde;
    s->integer("particles", ss.particles);
    s->num("dt", ss.dt);
    s->num("t_end", ss.t_end);
    if (auto p = s->child("paired_initial")) ss.paired_initial = parse_initial(std::move(*p));
    s->integer("record_every", ss.record_every);
    s->boolean("histogram", ss.histogram);
    s->finish();
    require(ss.particles >= 1, "sde.particles", "must be at least 1");
    require(ss.dt > 0.0, "sde.dt", "must be positive");
    require(ss.t_end >= 0.0, "sde.t_end", "must be nonnegative");
    require(ss.record_every >= 1, "sde.record_every", "must be at least 1");
  }

  if (auto v = o.child("verify")) {
    auto& vs = cfg.verify;
    v->integer("samples", vs.samples);
    v->integer("strict_samples", vs.strict_samples);
    v->choice<Key1Reading>("key1_reading", vs.reading,
                           {{"proof_consistent", Key1Reading::proof_consistent},
                            {"printed", Key1Reading::printed}});
    v->boolean("printed_diagnostic", vs.printed_diagnostic);
    v->finish();
    require(vs.samples >= 1 && vs.strict_samples >= 1, "verify", "sample counts must be positive");
  }

  if (auto r = o.child("oracle")) {
    auto& os = cfg.oracle;
    if (const json* cases = r->raw("cases")) {
      if (!cases->is_array()) fail(r->at("cases"), "expected an array");
      for (std::size_t k = 0; k < cases->size(); ++k) {
        Obj c((*cases)[k], r->at("cases") + "[" + std::to_string(k) + "]");
        OracleCase oc;
        c.vec2("mean", oc.mean);
        c.sym2("cov", oc.cov);
        c.finish();
        require(oc.cov.is_spd(), c.at("cov"), "must be positive definite");
        os.cases.push_back(oc);
      }
    }
    r->num("wa_tolerance", os.wa_tolerance);
    r->num("j_tolerance", os.j_tolerance);
    r->integer("wa_max_cells", os.wa_max_cells);
    r->finish();
    require(os.wa_tolerance > 0.0 && os.j_tolerance > 0.0, "oracle", "tolerances must be positive");
  }

  o.finish();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::parse_error, "cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json pert;
  switch (c.potential.kind) {
    case PotentialSpec::Kind::none: pert = {{"kind", "none"}}; break;
    case PotentialSpec::Kind::novoid: pert = {{"kind", "novoid"}, {"scale", c.potential.scale}}; break;
    case PotentialSpec::Kind::novoid_search: pert = {{"kind", "novoid_search"}}; break;
    case PotentialSpec::Kind::table: pert = {{"kind", "table"}, {"path", c.potential.path}}; break;
  }
  json mat;
  switch (c.matrix.kind) {
    case MatrixSpec::Kind::theorem:
      mat = {{"kind", "theorem"}};
      if (c.matrix.c_scale) mat["c_scale"] = *c.matrix.c_scale;
      if (c.matrix.c_fraction) mat["c_fraction"] = *c.matrix.c_fraction;
      break;
    case MatrixSpec::Kind::explicit_abc:
      mat = {{"kind", "explicit"}, {"a", c.matrix.a}, {"b", c.matrix.b}, {"c", c.matrix.c}};
      break;
    case MatrixSpec::Kind::identity: mat = {{"kind", "identity"}}; break;
  }
  json cases = json::array();
  for (const auto& oc : c.oracle.cases) cases.push_back({{"mean", vec_json(oc.mean)}, {"cov", sym_json(oc.cov)}});
  json sde = {{"particles", c.sde.particles}, {"dt", c.sde.dt}, {"t_end", c.sde.t_end},
              {"record_every", c.sde.record_every}, {"histogram", c.sde.histogram}};
  if (c.sde.paired_initial) sde["paired_initial"] = initial_json(*c.sde.paired_initial);
  const json j = {
      {"schema_version", c.schema_version},
      {"name", c.name},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"potential", {{"alpha", c.potential.alpha}, {"perturbation", pert}}},
      {"matrix", mat},
      {"grid", {{"n", c.grid.n}, {"nx", c.grid.nx}, {"nv", c.grid.nv}, {"Lx", c.grid.Lx}, {"Lv", c.grid.Lv}}},
      {"initial", initial_json(c.initial)},
      {"solver",
       {{"dt", c.solver.dt},
        {"cfl_fraction", c.solver.cfl_fraction},
        {"t_end", c.solver.t_end},
        {"snapshot_times", c.solver.snapshot_times},
        {"snapshot_every", c.solver.snapshot_every},
        {"splitting", c.solver.splitting == Splitting::strang ? "strang" : "lie"},
        {"velocity", c.solver.velocity == VelocityScheme::exponential ? "exponential" : "implicit_euler"}}},
      {"transport",
       {{"method", method_name(c.transport.method)},
        {"eps_rel", c.transport.eps_rel},
        {"max_cells", c.transport.max_cells},
        {"mass_floor", c.transport.mass_floor},
        {"compute_j", c.transport.compute_j},
        {"j_levels", c.transport.j_levels},
        {"eps_cells", c.transport.eps_cells}}},
      {"decay",
       {{"fit_from", c.decay.fit_from},
        {"fit_to", c.decay.fit_to},
        {"monotone_tol", c.decay.monotone_tol},
        {"min_r_squared", c.decay.min_r_squared},
        {"write_snapshots", c.decay.write_snapshots}}},
      {"dissipation",
       {{"method", method_name(c.dissipation.method)},
        {"max_cells", c.dissipation.max_cells},
        {"tol_factor", c.dissipation.tol_factor},
        {"gaussian_oracle", c.dissipation.gaussian_oracle},
        {"key_check", c.dissipation.key_check}}},
      {"sde", sde},
      {"verify",
       {{"samples", c.verify.samples},
        {"strict_samples", c.verify.strict_samples},
        {"key1_reading", c.verify.reading == Key1Reading::printed ? "printed" : "proof_consistent"},
        {"printed_diagnostic", c.verify.printed_diagnostic}}},
      {"oracle",
       {{"cases", cases},
        {"wa_tolerance", c.oracle.wa_tolerance},
        {"j_tolerance", c.oracle.j_tolerance},
        {"wa_max_cells", c.oracle.wa_max_cells}}},
  };
  return j.dump(2);
}

Potential build_potential(const PotentialSpec& spec) {
  switch (spec.kind) {
    case PotentialSpec::Kind::none: return {spec.alpha, Perturbation::none()};
    case PotentialSpec::Kind::novoid: return {spec.alpha, Perturbation::novoid(spec.scale)};
    case PotentialSpec::Kind::table: return {spec.alpha, load_perturbation_table(spec.path)};
    case PotentialSpec::Kind::novoid_search: {
      const auto r = novoid_search();
      return {r.alpha, Perturbation::novoid(r.scale)};
    }
  }
  throw Error(ErrorKind::invalid_parameter, "unknown potential kind");
}

TwistMatrix build_matrix(const MatrixSpec& spec, const Potential& U) {
  switch (spec.kind) {
    case MatrixSpec::Kind::identity: return TwistMatrix::identity();
    case MatrixSpec::Kind::explicit_abc: return make_twist(spec.a, spec.b, spec.c);
    case MatrixSpec::Kind::theorem: {
      if (spec.c_fraction) {
        const auto rep = check_admissibility(U.alpha, U.psi);
        if (!rep.admissible)
          throw Error(ErrorKind::hypothesis_violated, "c_fraction needs admissible parameters: " + rep.reason);
        return theorem_matrix(U.alpha, rep.c_low + *spec.c_fraction * (rep.c_high - rep.c_low));
      }
      return theorem_matrix(U.alpha, spec.c_scale.value_or(1.0));
    }
  }
  throw Error(ErrorKind::invalid_parameter, "unknown matrix kind");
}

PhaseGrid build_grid(const GridSpec& spec, const Potential& U) {
  const int nx = spec.nx > 0 ? spec.nx : spec.n;
  const int nv = spec.nv > 0 ? spec.nv : spec.n;
  if (spec.Lx > 0.0) return PhaseGrid::make(spec.Lx, spec.Lv, nx, nv);
  const auto g = default_grid(U, spec.n);
  return PhaseGrid::make(g.Lx, g.Lv, nx, nv);
}

DensityGrid build_initial_density(const InitialSpec& spec, const Potential& U, const PhaseGrid& grid) {
  switch (spec.kind) {
    case InitialSpec::Kind::gaussian: return gaussian_density(spec.mean, spec.cov, grid);
    case InitialSpec::Kind::equilibrium: return equilibrium_density(U, grid);
    case InitialSpec::Kind::point:
      throw Error(ErrorKind::invalid_parameter, "a point initial condition has no grid density");
    case InitialSpec::Kind::shifted_equilibrium:
    case InitialSpec::Kind::slow_mode: break;
  }
  Vec2 sh = spec.shift;
  if (spec.kind == InitialSpec::Kind::slow_mode) sh = spec.amplitude * Vec2{1.0, slow_eigenvalue(U.alpha)};
  // f_inf(z - shift); the exponent is shifted by its minimum to stay in range
  std::vector<double> e(grid.cells());
  double emin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const double x = grid.x(i) - sh.x, v = grid.v(j) - sh.v;
      e[grid.index(i, j)] = U.U(x) + 0.5 * v * v;
      emin = std::min(emin, e[grid.index(i, j)]);
    }
  }
  double edge = 0.0;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      auto& x = e[grid.index(i, j)];
      x = std::exp(-(x - emin));
      if (i == 0 || j == 0 || i == grid.nx - 1 || j == grid.nv - 1) edge = std::max(edge, x);
    }
  }
  // same containment rule as gaussian_density: six standard deviations inside
  if (edge > std::exp(-18.0)) throw Error(ErrorKind::domain_too_small, "shifted equilibrium is not contained in the grid");
  return DensityGrid::normalized(grid, std::move(e));
}

InitSpec build_particle_init(const InitialSpec& spec, const Potential& U) {
  switch (spec.kind) {
    case InitialSpec::Kind::gaussian: return InitSpec::gaussian(spec.mean, spec.cov);
    case InitialSpec::Kind::equilibrium: return InitSpec::equilibrium();
    case InitialSpec::Kind::point: return InitSpec::point(spec.mean);
    case InitialSpec::Kind::shifted_equilibrium:
    case InitialSpec::Kind::slow_mode: break;
  }
  if (!U.psi.is_none())
    throw Error(ErrorKind::invalid_parameter, "shifted equilibria are only sampled for psi = 0");
  Vec2 sh = spec.shift;
  if (spec.kind == InitialSpec::Kind::slow_mode) sh = spec.amplitude * Vec2{1.0, slow_eigenvalue(U.alpha)};
  return InitSpec::gaussian(sh, Sym2::diag(1.0 / U.alpha, 1.0));
}

SolverConfig build_solver(const SolverSpec& spec, const PhaseGrid& grid, const Potential& U) {
  SolverConfig c;
  c.dt = spec.dt > 0.0 ? spec.dt : spec.cfl_fraction * cfl_dt(grid, U);
  c.t_end = spec.t_end;
  c.splitting = spec.splitting;
  c.velocity = spec.velocity;
  if (!spec.snapshot_times.empty()) {
    c.snapshot_times = spec.snapshot_times;
  } else {
    const auto n = static_cast<long>(std::floor(spec.t_end / spec.snapshot_every + 1e-9));
    for (long k = 0; k <= n; ++k) c.snapshot_times.push_back(std::min(k * spec.snapshot_every, spec.t_end));
    if (c.snapshot_times.back() < spec.t_end - 1e-12) c.snapshot_times.push_back(spec.t_end);
  }
  return c;
}

}  // namespace hypoot

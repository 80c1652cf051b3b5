// Primal network simplex for the balanced transportation problem on the
// complete bipartite graph (sources 0..m-1, sinks m..m+n-1, artificial root).
// Uncapacitated arcs, so non-tree arcs always sit at their lower bound.
// Entering arc: block search with lowest-index tie breaking. Leaving arc:
// strongly feasible rule (last blocking arc on the sink side), which rules
// out cycling under degeneracy. Costs are int64 so pivot decisions are exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "hypoot/errors.hpp"
#include "hypoot/transport.hpp"

namespace hypoot {

namespace {

constexpr std::int8_t kLower = 1;
constexpr std::int8_t kTree = 0;
constexpr int kUp = 1;     // pred arc points from node to parent
constexpr int kDown = -1;  // pred arc points from parent to node

class TransportSimplex {
 public:
  TransportSimplex(std::vector<std::int64_t> cost, std::size_t m, std::size_t n,
                   const std::vector<double>& supply, const std::vector<double>& demand)
      : m_(m), n_(n), nodes_(m + n), arcs_(m * n), cost_(std::move(cost)) {
    std::int64_t cmax = 0;
    for (auto c : cost_) cmax = std::max(cmax, c);
    art_cost_ = (cmax + 1) * static_cast<std::int64_t>(nodes_ + 1);

    const std::size_t all = arcs_ + nodes_;
    flow_.assign(all, 0.0);
    state_.assign(all, kLower);
    const std::size_t nn = nodes_ + 1;
    parent_.assign(nn, -1);
    pred_.assign(nn, -1);
    dir_.assign(nn, kUp);
    depth_.assign(nn, 0);
    pi_.assign(nn, 0);
    first_child_.assign(nn, -1);
    next_sib_.assign(nn, -1);
    prev_sib_.assign(nn, -1);
    art_forward_.assign(nodes_, 1);

    const int root = static_cast<int>(nodes_);
    for (std::size_t u = 0; u < nodes_; ++u) {
      const std::size_t e = arcs_ + u;
      state_[e] = kTree;
      parent_[u] = root;
      pred_[u] = static_cast<std::int64_t>(e);
      depth_[u] = 1;
      add_child(root, static_cast<int>(u));
      if (u < m_) {
        art_forward_[u] = 1;
        dir_[u] = kUp;
        flow_[e] = supply[u];
        pi_[u] = 0;
      } else {
        art_forward_[u] = 0;
        dir_[u] = kDown;
        flow_[e] = demand[u - m_];
        pi_[u] = art_cost_;
      }
    }
    block_ = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs_))));
  }

  void run() {
    std::size_t in;
    while (find_entering(in)) pivot(in);
  }

  std::uint64_t pivots() const { return pivots_; }
  const std::vector<double>& flow() const { return flow_; }
  double artificial_flow() const {
    double s = 0.0;
    for (std::size_t u = 0; u < nodes_; ++u) s += flow_[arcs_ + u];
    return s;
  }
  std::int64_t potential(std::size_t u) const { return pi_[u]; }

 private:
  int source(std::size_t e) const {
    if (e < arcs_) return static_cast<int>(e / n_);
    const std::size_t u = e - arcs_;
    return art_forward_[u] ? static_cast<int>(u) : static_cast<int>(nodes_);
  }
  int target(std::size_t e) const {
    if (e < arcs_) return static_cast<int>(m_ + e % n_);
    const std::size_t u = e - arcs_;
    return art_forward_[u] ? static_cast<int>(nodes_) : static_cast<int>(u);
  }
  std::int64_t cost(std::size_t e) const {
    if (e < arcs_) return cost_[e];
    return art_forward_[e - arcs_] ? 0 : art_cost_;
  }

  bool find_entering(std::size_t& in) {
    std::int64_t best = 0;
    std::size_t cnt = block_;
    std::size_t e = next_arc_;
    for (std::size_t scanned = 0; scanned < arcs_; ++scanned) {
      if (state_[e] == kLower) {
        const std::size_t i = e / n_;
        const std::size_t j = m_ + e % n_;
        const std::int64_t rc = cost_[e] + pi_[i] - pi_[j];
        if (rc < best) {
          best = rc;
          in = e;
        }
      }
      if (++e == arcs_) e = 0;
      if (--cnt == 0) {
        if (best < 0) break;
        cnt = block_;
      }
    }
    if (best >= 0) return false;
    next_arc_ = e;
    return true;
  }

  int join_node(int u, int v) const {
    while (depth_[u] > depth_[v]) u = parent_[u];
    while (depth_[v] > depth_[u]) v = parent_[v];
    while (u != v) {
      u = parent_[u];
      v = parent_[v];
    }
    return u;
  }

  void add_child(int p, int c) {
    prev_sib_[c] = -1;
    next_sib_[c] = first_child_[p];
    if (first_child_[p] >= 0) prev_sib_[first_child_[p]] = c;
    first_child_[p] = c;
  }

  void remove_child(int p, int c) {
    if (prev_sib_[c] >= 0) {
      next_sib_[prev_sib_[c]] = next_sib_[c];
    } else {
      first_child_[p] = next_sib_[c];
    }
    if (next_sib_[c] >= 0) prev_sib_[next_sib_[c]] = prev_sib_[c];
    prev_sib_[c] = next_sib_[c] = -1;
  }

  void pivot(std::size_t in) {
    ++pivots_;
    const int s = source(in), t = target(in);
    const int join = join_node(s, t);

    double delta = std::numeric_limits<double>::infinity();
    int u_out = -1;
    int side = 0;
    for (int u = s; u != join; u = parent_[u]) {
      if (dir_[u] == kUp && flow_[pred_[u]] < delta) {
        delta = flow_[pred_[u]];
        u_out = u;
        side = 1;
      }
    }
    for (int u = t; u != join; u = parent_[u]) {
      if (dir_[u] == kDown && flow_[pred_[u]] <= delta) {
        delta = flow_[pred_[u]];
        u_out = u;
        side = 2;
      }
    }
    if (side == 0) throw Error(ErrorKind::no_convergence, "network simplex: unbounded cycle");

    if (delta > 0.0) {
      flow_[in] += delta;
      for (int u = s; u != join; u = parent_[u]) flow_[pred_[u]] -= dir_[u] * delta;
      for (int u = t; u != join; u = parent_[u]) flow_[pred_[u]] += dir_[u] * delta;
    }
    const std::size_t out = static_cast<std::size_t>(pred_[u_out]);
    flow_[out] = 0.0;
    state_[out] = kLower;
    state_[in] = kTree;

    const int u_in = side == 1 ? s : t;
    const int v_in = side == 1 ? t : s;
    const std::int64_t rc = cost(in) + pi_[s] - pi_[t];
    const std::int64_t sigma = (u_in == s) ? -rc : rc;

    // re-hang the path u_in .. u_out below v_in, reversing parent pointers
    remove_child(parent_[u_out], u_out);
    int prev = v_in;
    std::int64_t prev_arc = static_cast<std::int64_t>(in);
    int u = u_in;
    while (true) {
      const int old_parent = parent_[u];
      const std::int64_t old_arc = pred_[u];
      if (u != u_out) remove_child(old_parent, u);
      parent_[u] = prev;
      pred_[u] = prev_arc;
      dir_[u] = (source(static_cast<std::size_t>(prev_arc)) == u) ? kUp : kDown;
      add_child(prev, u);
      if (u == u_out) break;
      prev = u;
      prev_arc = old_arc;
      u = old_parent;
    }

    stack_.clear();
    stack_.push_back(u_in);
    while (!stack_.empty()) {
      const int w = stack_.back();
      stack_.pop_back();
      pi_[w] += sigma;
      depth_[w] = depth_[parent_[w]] + 1;
      for (int c = first_child_[w]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
    }
  }

  std::size_t m_, n_, nodes_, arcs_;
  std::vector<std::int64_t> cost_;
  std::int64_t art_cost_ = 0;
  std::vector<double> flow_;
  std::vector<std::int8_t> state_;
  std::vector<int> parent_;
  std::vector<std::int64_t> pred_;
  std::vector<int> dir_;
  std::vector<int> depth_;
  std::vector<std::int64_t> pi_;
  std::vector<int> first_child_, next_sib_, prev_sib_;
  std::vector<std::uint8_t> art_forward_;
  std::vector<int> stack_;
  std::size_t block_ = 10;
  std::size_t next_arc_ = 0;
  std::uint64_t pivots_ = 0;
};

}  // namespace

ExactResult exact_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A) {
  const std::size_t m = mu.size(), n = nu.size();
  if (m == 0 || n == 0) throw Error(ErrorKind::invalid_parameter, "empty measure");
  if (static_cast<double>(m) * static_cast<double>(n) > 2e7) {
    throw Error(ErrorKind::size_exceeded, "exact_ot needs m n <= 2e7, got " + std::to_string(m) +
                                              " x " + std::to_string(n));
  }

  std::vector<double> c(m * n);
  double cmax = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = norm_sq(A, mu.atoms[i] - nu.atoms[j]);
      cmax = std::max(cmax, c[i * n + j]);
    }
  }
  const double scale = cmax > 0.0 ? 1e12 / cmax : 1.0;
  std::vector<std::int64_t> ic(m * n);
  for (std::size_t e = 0; e < m * n; ++e) ic[e] = std::llround(c[e] * scale);

  TransportSimplex ns(std::move(ic), m, n, mu.weights, nu.weights);
  ns.run();

  ExactResult out;
  out.pivots = ns.pivots();
  out.plan.m = m;
  out.plan.n = n;
  long double primal = 0.0L;
  const auto& flow = ns.flow();
  for (std::size_t e = 0; e < m * n; ++e) {
    if (flow[e] > 0.0) {
      out.plan.entries.push_back({static_cast<std::uint32_t>(e / n), static_cast<std::uint32_t>(e % n), flow[e]});
      primal += static_cast<long double>(flow[e]) * c[e];
    }
  }
  if (ns.artificial_flow() > 1e-9) {
    throw Error(ErrorKind::no_convergence, "network simplex left flow on artificial arcs");
  }

  // sink potentials give v_j; the c-transform makes the dual exactly feasible in double costs
  std::vector<double> v(n);
  for (std::size_t j = 0; j < n; ++j) v[j] = static_cast<double>(ns.potential(m + j)) / scale;
  long double dual = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    double ui = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) ui = std::min(ui, c[i * n + j] - v[j]);
    dual += static_cast<long double>(mu.weights[i]) * ui;
  }
  for (std::size_t j = 0; j < n; ++j) dual += static_cast<long double>(nu.weights[j]) * v[j];

  out.cost = static_cast<double>(primal);
  out.dual_value = static_cast<double>(dual);
  out.duality_gap = static_cast<double>(primal - dual);
  out.certified = out.duality_gap <= 1e-9 * out.cost + 1e-12 * cmax;
  return out;
}

}  // namespace hypoot

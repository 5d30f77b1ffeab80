#include "blora/markov_model.hpp"

#include "blora/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <ostream>
#include <string>

namespace blora {

Level quantize(double volts, int granularity) {
  return static_cast<Level>(std::llround(volts * granularity));
}

Level discrete_voltage_after(const CircuitConfig& circuit, DeviceState state, Level l0, double t,
                             int granularity) {
  const double g = granularity;
  const Level top = quantize(circuit.e(), granularity);
  const Level l = quantize(voltage_after(circuit, state, l0 / g, t), granularity);
  return std::clamp<Level>(l, 0, top);
}

std::optional<double> discrete_time_to_level(const CircuitConfig& circuit, DeviceState state,
                                             Level l_i, Level l_f, int granularity) {
  const double g = granularity;
  return time_to_voltage(circuit, state, l_i / g, l_f / g);
}

namespace {

// Smallest l in [lo, hi] with pred(l), assuming pred is monotone; hi + 1 if none.
template <typename Pred>
Level lowest_level(Level lo, Level hi, Pred pred) {
  Level a = lo;
  Level b = hi + 1;
  while (a < b) {
    const Level mid = a + (b - a) / 2;
    if (pred(mid))
      b = mid;
    else
      a = mid + 1;
  }
  return a;
}

class ChainRows {
public:
  ChainRows(const Scenario& sc, int g, const ThresholdLevels& th)
      : c_(sc.circuit.with_ideal_capacitor()), s_(sc.schedule()), th_(th), g_(g),
        m_(sc.interval_m), p1_(sc.p1), p2_(sc.p2) {}

  std::vector<Branch> successors(const ChainState& from) const {
    std::vector<Branch> out;
    switch (from.kind) {
    case ChainKind::Off:
      add(out, recharge(from.level, m_), 1.0);
      break;
    case ChainKind::Sl0: {
      // the TX starts and browns out
      const double t_a = T(DeviceState::Tx, from.level, th_.v_min).value_or(0.0);
      add(out, recharge(th_.v_min, m_ - t_a), 1.0);
      break;
    }
    case ChainKind::Sl1:
      sl1_row(out, from.level);
      break;
    }
    return out;
  }

private:
  Level V(DeviceState s, Level l, double t) const {
    return discrete_voltage_after(c_, s, l, t, g_);
  }
  std::optional<double> T(DeviceState s, Level a, Level b) const {
    return discrete_time_to_level(c_, s, a, b, g_);
  }

  ChainState awake(Level l) const {
    l = std::clamp(l, th_.v_min, th_.v_max - 1);
    return {l < th_.v_tx ? ChainKind::Sl0 : ChainKind::Sl1, l};
  }
  ChainState off(Level l) const { return {ChainKind::Off, std::clamp(l, 0, th_.v_sl - 1)}; }

  // Off at level l with `remaining` seconds until the next scheduled uplink.
  ChainState recharge(Level l, double remaining) const {
    remaining = std::max(remaining, 0.0);
    const auto tw = T(DeviceState::Off, l, th_.v_sl);
    if (!tw || *tw >= remaining)
      return off(V(DeviceState::Off, l, remaining));
    return awake(V(DeviceState::Sleep, th_.v_sl, remaining - *tw));
  }

  ChainState sleep_rest(Level l, double elapsed) const {
    return awake(V(DeviceState::Sleep, l, std::max(m_ - elapsed, 0.0)));
  }

  // Brown-out during a phase of length `dur` that started at `elapsed`.
  ChainState abort_in(DeviceState s, Level l, double elapsed, double dur) const {
    const double t_ab = T(s, l, th_.v_min).value_or(dur);
    return recharge(th_.v_min, m_ - elapsed - t_ab);
  }

  bool survives(Level end) const { return end >= th_.v_min + 1; }

  static void add(std::vector<Branch>& out, ChainState to, double p) {
    if (p <= 0.0)
      return;
    for (auto& b : out)
      if (b.to == to) {
        b.prob += p;
        return;
      }
    out.push_back({to, p});
  }

  void sl1_row(std::vector<Branch>& out, Level l) const {
    const Level l1 = V(DeviceState::Tx, l, s_.t_tx);
    double e = s_.t_tx;
    const Level a = V(DeviceState::Idle, l1, s_.t_id1);
    if (!survives(a)) {
      add(out, abort_in(DeviceState::Idle, l1, e, s_.t_id1), 1.0);
      return;
    }
    e += s_.t_id1;

    if (a >= th_.v_rx1)
      add(out, sleep_rest(V(DeviceState::Rx, a, s_.t_rx1), e + s_.t_rx1), p1_);
    else
      add(out, abort_in(DeviceState::Rx, a, e, s_.t_rx1), p1_);

    const double q = 1.0 - p1_;
    const Level c = V(DeviceState::Listen, a, s_.t_l1);
    if (!survives(c)) {
      add(out, abort_in(DeviceState::Listen, a, e, s_.t_l1), q);
      return;
    }
    e += s_.t_l1;
    const Level d = V(DeviceState::Idle, c, s_.t_id2);
    if (!survives(d)) {
      add(out, abort_in(DeviceState::Idle, c, e, s_.t_id2), q);
      return;
    }
    e += s_.t_id2;

    if (d >= th_.v_rx2)
      add(out, sleep_rest(V(DeviceState::Rx, d, s_.t_rx2), e + s_.t_rx2), q * p2_);
    else
      add(out, abort_in(DeviceState::Rx, d, e, s_.t_rx2), q * p2_);

    const Level f = V(DeviceState::Listen, d, s_.t_l2);
    if (survives(f))
      add(out, sleep_rest(f, e + s_.t_l2), q * (1.0 - p2_));
    else
      add(out, abort_in(DeviceState::Listen, d, e, s_.t_l2), q * (1.0 - p2_));
  }

  CircuitConfig c_;
  TimingSchedule s_;
  ThresholdLevels th_;
  int g_;
  double m_, p1_, p2_;
};

// Dense index over the three level ranges.
class StateIndex {
public:
  explicit StateIndex(const ThresholdLevels& th) : th_(th) {
    for (auto& v : slots_)
      v.assign(static_cast<std::size_t>(th.v_max) + 1, kNone);
  }
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::size_t& operator[](const ChainState& s) {
    return slots_[static_cast<std::size_t>(s.kind)][static_cast<std::size_t>(s.level)];
  }
  std::size_t get(const ChainState& s) const {
    if (s.level < 0 || s.level > th_.v_max)
      return kNone;
    return slots_[static_cast<std::size_t>(s.kind)][static_cast<std::size_t>(s.level)];
  }

private:
  ThresholdLevels th_;
  std::array<std::vector<std::size_t>, 3> slots_;
};

} // namespace

ThresholdLevels threshold_levels(const Scenario& scenario, int granularity) {
  validate(scenario);
  if (granularity < 1)
    throw InvalidScenario("granularity must be >= 1");
  const CircuitConfig c = scenario.circuit.with_ideal_capacitor();
  const TimingSchedule s = scenario.schedule();
  ThresholdLevels th;
  th.v_min = quantize(c.v_min(), granularity);
  th.v_sl = quantize(c.v_sl(), granularity);
  th.v_max = quantize(c.e(), granularity);
  if (th.v_sl <= th.v_min || th.v_max <= th.v_sl)
    throw InvalidScenario("granularity " + std::to_string(granularity) +
                          " does not separate v_min, v_sl and E");

  auto lowest = [&](DeviceState st, double dur) {
    return lowest_level(th.v_min + 1, th.v_max, [&](Level l) {
      return discrete_voltage_after(c, st, l, dur, granularity) >= th.v_min + 1;
    });
  };
  th.v_tx = lowest(DeviceState::Tx, s.t_tx);
  th.v_rx1 = lowest(DeviceState::Rx, s.t_rx1);
  th.v_rx2 = lowest(DeviceState::Rx, s.t_rx2);
  if (th.v_tx > th.v_max)
    throw InfeasibleScenario("no voltage level up to E completes the uplink");
  return th;
}

std::string_view to_string(ChainKind kind) noexcept {
  switch (kind) {
  case ChainKind::Off: return "OFF";
  case ChainKind::Sl0: return "SL0";
  case ChainKind::Sl1: return "SL1";
  }
  return "?";
}

TransitionMatrix::TransitionMatrix(std::vector<ChainState> states,
                                   std::vector<std::size_t> row_ptr, std::vector<Entry> entries,
                                   ThresholdLevels thresholds)
    : states_(std::move(states)), row_ptr_(std::move(row_ptr)), entries_(std::move(entries)),
      thresholds_(thresholds) {}

std::optional<std::size_t> TransitionMatrix::index_of(const ChainState& s) const {
  auto it = std::find(states_.begin(), states_.end(), s);
  if (it == states_.end())
    return std::nullopt;
  return static_cast<std::size_t>(it - states_.begin());
}

void TransitionMatrix::left_multiply(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0)
      continue;
    for (const auto& e : row(i))
      out[e.col] += xi * e.prob;
  }
}

std::vector<Branch> chain_successors(const Scenario& scenario, int granularity,
                                     const ThresholdLevels& thresholds, const ChainState& from) {
  return ChainRows(scenario, granularity, thresholds).successors(from);
}

TransitionMatrix build_transition_matrix(const Scenario& scenario, int granularity,
                                         ChainBuildOptions options) {
  validate_monotone(scenario);
  const ThresholdLevels th = threshold_levels(scenario, granularity);
  const ChainRows rows(scenario, granularity, th);

  std::vector<ChainState> states;
  StateIndex index(th);
  auto intern = [&](const ChainState& s) {
    std::size_t& slot = index[s];
    if (slot == StateIndex::kNone) {
      slot = states.size();
      states.push_back(s);
    }
    return slot;
  };

  intern({ChainKind::Off, th.v_min});
  if (options.all_states) {
    for (Level l = 0; l < th.v_sl; ++l)
      intern({ChainKind::Off, l});
    for (Level l = th.v_min; l < std::min(th.v_tx, th.v_max); ++l)
      intern({ChainKind::Sl0, l});
    for (Level l = th.v_tx; l < th.v_max; ++l)
      intern({ChainKind::Sl1, l});
  }

  std::vector<std::size_t> row_ptr{0};
  std::vector<TransitionMatrix::Entry> entries;
  // states grows while rows are expanded, which is the breadth-first search
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (const auto& b : rows.successors(states[i])) {
      const std::size_t j = intern(b.to);
      entries.push_back({j, b.prob});
    }
    auto first = entries.begin() + static_cast<std::ptrdiff_t>(row_ptr.back());
    std::sort(first, entries.end(), [](const auto& a, const auto& b) { return a.col < b.col; });
    row_ptr.push_back(entries.size());
  }
  return TransitionMatrix(std::move(states), std::move(row_ptr), std::move(entries), th);
}

namespace {

struct ClassStructure {
  std::vector<std::size_t> reachable;          // from the initial state
  std::vector<std::vector<std::size_t>> closed; // closed communicating classes
  std::vector<int> class_of;                   // -1 for transient / unreachable
};

ClassStructure analyse(const TransitionMatrix& p, std::size_t initial) {
  const std::size_t n = p.size();
  ClassStructure cs;
  std::vector<char> seen(n, 0);
  std::deque<std::size_t> queue{initial};
  seen[initial] = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    cs.reachable.push_back(u);
    for (const auto& e : p.row(u))
      if (e.prob > 0 && !seen[e.col]) {
        seen[e.col] = 1;
        queue.push_back(e.col);
      }
  }

  // iterative Tarjan over the reachable subgraph
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> idx(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;
  struct Frame {
    std::size_t v;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (std::size_t root : cs.reachable) {
    if (idx[root] != kUnset)
      continue;
    call.push_back({root, 0});
    idx[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto r = p.row(f.v);
      if (f.edge < r.size()) {
        const auto& e = r[f.edge++];
        if (e.prob <= 0)
          continue;
        const std::size_t w = e.col;
        if (idx[w] == kUnset) {
          idx[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], idx[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty())
        low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == idx[v]) {
        std::vector<std::size_t> members;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = comps.size();
          members.push_back(w);
        } while (w != v);
        comps.push_back(std::move(members));
      }
    }
  }

  cs.class_of.assign(n, -1);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    bool closed = true;
    for (std::size_t u : comps[k]) {
      for (const auto& e : p.row(u))
        if (e.prob > 0 && comp[e.col] != k) {
          closed = false;
          break;
        }
      if (!closed)
        break;
    }
    if (!closed)
      continue;
    std::sort(comps[k].begin(), comps[k].end());
    for (std::size_t u : comps[k])
      cs.class_of[u] = static_cast<int>(cs.closed.size());
    cs.closed.push_back(std::move(comps[k]));
  }
  return cs;
}

std::size_t class_period(const TransitionMatrix& p, const std::vector<std::size_t>& members) {
  constexpr long kUnset = -1;
  std::vector<long> depth(p.size(), kUnset);
  std::deque<std::size_t> queue{members.front()};
  depth[members.front()] = 0;
  std::size_t d = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (const auto& e : p.row(u)) {
      if (e.prob <= 0)
        continue;
      if (depth[e.col] == kUnset) {
        depth[e.col] = depth[u] + 1;
        queue.push_back(e.col);
      } else {
        const long diff = std::abs(depth[u] + 1 - depth[e.col]);
        d = std::gcd(d, static_cast<std::size_t>(diff));
      }
    }
  }
  return d == 0 ? 1 : d;
}

// Mass absorbed into each closed class starting from `initial`.
std::vector<double> absorption_power(const TransitionMatrix& p, const ClassStructure& cs,
                                     std::size_t initial, long& steps, long max_steps) {
  std::vector<double> weight(cs.closed.size(), 0.0);
  if (cs.class_of[initial] >= 0) {
    weight[static_cast<std::size_t>(cs.class_of[initial])] = 1.0;
    return weight;
  }
  std::vector<double> mass(p.size(), 0.0), next(p.size(), 0.0);
  mass[initial] = 1.0;
  double left = 1.0;
  while (left > 1e-15) {
    if (++steps > max_steps)
      throw NonConvergence("transient mass not absorbed within the step cap", left);
    std::fill(next.begin(), next.end(), 0.0);
    left = 0.0;
    for (std::size_t u : cs.reachable) {
      if (mass[u] == 0.0)
        continue;
      for (const auto& e : p.row(u)) {
        const double m = mass[u] * e.prob;
        const int k = cs.class_of[e.col];
        if (k >= 0)
          weight[static_cast<std::size_t>(k)] += m;
        else {
          next[e.col] += m;
          left += m;
        }
      }
    }
    mass.swap(next);
  }
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  for (double& w : weight)
    w /= total;
  return weight;
}

} // namespace

double stationary_residual(const TransitionMatrix& p, std::span<const double> pi) {
  std::vector<double> y(p.size());
  p.left_multiply(pi, y);
  double r = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    r = std::max(r, std::abs(y[i] - pi[i]));
  return r;
}

std::vector<double> stationary_distribution(const TransitionMatrix& p, std::size_t initial,
                                            StationaryOptions options) {
  if (initial >= p.size())
    throw DomainError("initial state out of range");
  const ClassStructure cs = analyse(p, initial);
  long steps = 0;
  const std::vector<double> weight =
      absorption_power(p, cs, initial, steps, options.max_steps);

  const std::size_t n = p.size();
  std::vector<double> pi(n, 0.0);
  std::vector<double> x(n), y(n), avg(n), check(n);
  for (std::size_t k = 0; k < cs.closed.size(); ++k) {
    if (weight[k] <= 0.0)
      continue;
    const auto& members = cs.closed[k];
    const std::size_t d = class_period(p, members);
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t u : members)
      x[u] = 1.0 / static_cast<double>(members.size());
    double residual = 1.0;
    while (true) {
      // average over one period window starting at x
      std::fill(avg.begin(), avg.end(), 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t u : members)
          avg[u] += x[u] / static_cast<double>(d);
        p.left_multiply(x, y);
        x.swap(y);
      }
      p.left_multiply(avg, check);
      steps += static_cast<long>(d) + 1;
      residual = 0.0;
      for (std::size_t u : members)
        residual = std::max(residual, std::abs(check[u] - avg[u]));
      if (residual < options.tolerance)
        break;
      if (steps > options.max_steps)
        throw NonConvergence("stationary iteration hit the step cap", residual);
    }
    for (std::size_t u : members)
      pi[u] += weight[k] * avg[u];
  }
  return pi;
}

std::vector<double> stationary_distribution_direct(const TransitionMatrix& p,
                                                   std::size_t initial) {
  if (initial >= p.size())
    throw DomainError("initial state out of range");
  using SpMat = Eigen::SparseMatrix<double>;
  using Triplet = Eigen::Triplet<double>;
  const ClassStructure cs = analyse(p, initial);
  const std::size_t n = p.size();

  // absorption: (I - Q)^T y = e_init over the transient states
  std::vector<double> weight(cs.closed.size(), 0.0);
  if (cs.class_of[initial] >= 0) {
    weight[static_cast<std::size_t>(cs.class_of[initial])] = 1.0;
  } else {
    std::vector<long> local(n, -1);
    std::vector<std::size_t> transient;
    for (std::size_t u : cs.reachable)
      if (cs.class_of[u] < 0) {
        local[u] = static_cast<long>(transient.size());
        transient.push_back(u);
      }
    const auto m = static_cast<Eigen::Index>(transient.size());
    std::vector<Triplet> trips;
    for (Eigen::Index i = 0; i < m; ++i) {
      trips.emplace_back(i, i, 1.0);
      for (const auto& e : p.row(transient[static_cast<std::size_t>(i)]))
        if (local[e.col] >= 0)
          trips.emplace_back(local[e.col], i, -e.prob);
    }
    SpMat a(m, m);
    a.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
      throw NonConvergence("absorption system is singular", 0.0);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs[local[initial]] = 1.0;
    const Eigen::VectorXd visits = lu.solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i)
      for (const auto& e : p.row(transient[static_cast<std::size_t>(i)])) {
        const int k = cs.class_of[e.col];
        if (k >= 0)
          weight[static_cast<std::size_t>(k)] += visits[i] * e.prob;
      }
  }

  std::vector<double> pi(n, 0.0);
  std::vector<long> local(n, -1);
  for (std::size_t k = 0; k < cs.closed.size(); ++k) {
    if (weight[k] <= 0.0)
      continue;
    const auto& members = cs.closed[k];
    const auto m = static_cast<Eigen::Index>(members.size());
    for (Eigen::Index i = 0; i < m; ++i)
      local[members[static_cast<std::size_t>(i)]] = i;
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    std::vector<Triplet> trips;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i != m - 1)
        trips.emplace_back(i, i, -1.0);
      for (const auto& e : p.row(members[static_cast<std::size_t>(i)])) {
        const long r = local[e.col];
        if (r >= 0 && r != m - 1)
          trips.emplace_back(r, i, e.prob);
      }
      trips.emplace_back(m - 1, i, 1.0);
    }
    SpMat a(m, m);
    a.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
      throw NonConvergence("stationary system is singular", 0.0);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs[m - 1] = 1.0;
    const Eigen::VectorXd x = lu.solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i)
      pi[members[static_cast<std::size_t>(i)]] += weight[k] * x[i];
    for (std::size_t u : members)
      local[u] = -1;
  }
  return pi;
}

ChainResult chain_metrics(const TransitionMatrix& p, std::span<const double> pi,
                          const Scenario& scenario, int granularity, Pdl2Indicator indicator) {
  const CircuitConfig c = scenario.circuit.with_ideal_capacitor();
  const TimingSchedule s = scenario.schedule();
  const ThresholdLevels& th = p.thresholds();
  const Level rx2_gate = indicator == Pdl2Indicator::VMin ? th.v_min : th.v_rx2;

  ChainResult r;
  r.pi.assign(pi.begin(), pi.end());
  double not_sl1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ChainState& st = p.state(i);
    if (st.kind != ChainKind::Sl1) {
      not_sl1 += pi[i];
      continue;
    }
    const Level tx_end = discrete_voltage_after(c, DeviceState::Tx, st.level, s.t_tx, granularity);
    const Level v1 = discrete_voltage_after(c, DeviceState::Idle, tx_end, s.t_id1, granularity);
    if (v1 >= th.v_rx1)
      r.pdl1 += scenario.p1 * pi[i];
    const Level l1 = discrete_voltage_after(c, DeviceState::Listen, v1, s.t_l1, granularity);
    const Level v2 = discrete_voltage_after(c, DeviceState::Idle, l1, s.t_id2, granularity);
    if (v2 >= rx2_gate)
      r.pdl2 += (1.0 - scenario.p1) * scenario.p2 * pi[i];
  }
  r.pdr = std::clamp(1.0 - not_sl1, 0.0, 1.0);
  return r;
}

ChainResult solve_chain(const Scenario& scenario, int granularity, Pdl2Indicator indicator) {
  const TransitionMatrix p = build_transition_matrix(scenario, granularity);
  const std::vector<double> pi = stationary_distribution(p, 0);
  return chain_metrics(p, pi, scenario, granularity, indicator);
}

void write_matrix_dump(std::ostream& out, const TransitionMatrix& p) {
  out << "src_kind,src_level,dst_kind,dst_level,prob\n";
  char buf[64];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ChainState& a = p.state(i);
    for (const auto& e : p.row(i)) {
      const ChainState& b = p.state(e.col);
      std::snprintf(buf, sizeof buf, "%.17g", e.prob);
      out << to_string(a.kind) << ',' << a.level << ',' << to_string(b.kind) << ','
          << b.level << ',' << buf << '\n';
    }
  }
}

} // namespace blora

#include "blora/characterization.hpp"

#include "blora/errors.hpp"
#include "blora/markov_model.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

namespace blora {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <typename T>
std::vector<T> parallel_map(std::size_t n, unsigned jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
  return out;
}

bool completes(const Scenario& sc, double v, DlCase dl_case) {
  return single_cycle_trace(sc, v, dl_case).completed;
}

} // namespace

std::optional<double> required_cycle_voltage(const Scenario& scenario, DlCase dl_case,
                                             const BisectionSettings& bis) {
  validate(scenario);
  const double v_min = scenario.circuit.v_min();
  double hi = asymptote(scenario.circuit, DeviceState::Sleep) - bis.asymptote_margin_v;
  if (hi < v_min || !completes(scenario, hi, dl_case))
    return std::nullopt;
  double lo = v_min;
  if (completes(scenario, lo, dl_case))
    return lo;
  while (hi - lo > bis.voltage_tol_v) {
    const double mid = 0.5 * (lo + hi);
    (completes(scenario, mid, dl_case) ? hi : lo) = mid;
  }
  return hi;
}

double min_capacitance(const Scenario& scenario, DlCase dl_case, const BisectionSettings& bis) {
  auto feasible = [&](double c) {
    Scenario sc = scenario;
    sc.circuit.capacitor.capacitance_f = c;
    return required_cycle_voltage(sc, dl_case, bis).has_value();
  };
  double lo = bis.capacitance_lo_f;
  double hi = bis.capacitance_hi_f;
  if (!feasible(hi))
    throw NoFeasibleCapacitance("no capacitance up to " + std::to_string(hi) +
                                " F completes the cycle");
  if (feasible(lo))
    return lo;
  while (hi - lo > bis.capacitance_tol_f) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

double cycle_duration(const Scenario& scenario, DlCase dl_case) {
  const TimingSchedule s = scenario.schedule();
  switch (dl_case) {
  case DlCase::Rx1: return s.t_tx + s.t_id1 + s.t_rx1;
  case DlCase::Rx2: return s.t_tx + s.t_id1 + s.t_l1 + s.t_id2 + s.t_rx2;
  case DlCase::None: break;
  }
  return s.t_tx + s.t_id1 + s.t_l1 + s.t_id2 + s.t_l2;
}

std::optional<double> min_tx_interval(const Scenario& scenario, DlCase dl_case,
                                      const BisectionSettings& bis) {
  const auto v_star = required_cycle_voltage(scenario, dl_case, bis);
  if (!v_star)
    return std::nullopt;
  const CircuitConfig& c = scenario.circuit;
  double wake = 0.0;
  if (*v_star > c.v_min()) {
    const double vc = capacitor_voltage_for_load(c, DeviceState::Off, c.v_min());
    const auto t = time_to_voltage(c, DeviceState::Off, vc, *v_star);
    if (!t)
      return std::nullopt;
    wake = *t;
  }
  return wake + cycle_duration(scenario, dl_case);
}

std::optional<double> wakeup_time(const CircuitConfig& circuit, double threshold_fraction) {
  validate(circuit);
  const double target = threshold_fraction * circuit.e();
  const double v_min = circuit.v_min();
  if (target < v_min - 1e-12)
    throw DomainError("turn-on threshold is below v_min");
  if (target <= v_min)
    return 0.0;
  const double vc = capacitor_voltage_for_load(circuit, DeviceState::Off, v_min);
  return time_to_voltage(circuit, DeviceState::Off, vc, target);
}

std::string_view to_string(SweepAxis axis) noexcept {
  switch (axis) {
  case SweepAxis::UlPayload: return "ul_pl";
  case SweepAxis::DlPayload: return "dl_pl";
  case SweepAxis::Threshold: return "threshold";
  case SweepAxis::Interval: return "interval";
  case SweepAxis::Capacitance: return "capacitance";
  case SweepAxis::HarvestPower: return "power";
  case SweepAxis::Granularity: return "granularity";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(std::string_view name) {
  for (auto a : {SweepAxis::UlPayload, SweepAxis::DlPayload, SweepAxis::Threshold,
                 SweepAxis::Interval, SweepAxis::Capacitance, SweepAxis::HarvestPower,
                 SweepAxis::Granularity})
    if (to_string(a) == name)
      return a;
  throw DomainError("unknown sweep axis '" + std::string(name) + "'");
}

Scenario apply_axis(Scenario s, SweepAxis axis, double value) {
  switch (axis) {
  case SweepAxis::UlPayload: s.ul_pl = static_cast<int>(std::lround(value)); break;
  case SweepAxis::DlPayload: s.dl_pl = static_cast<int>(std::lround(value)); break;
  case SweepAxis::Threshold: s.circuit.thresholds.turn_on_fraction = value; break;
  case SweepAxis::Interval: s.interval_m = value; break;
  case SweepAxis::Capacitance: s.circuit.capacitor.capacitance_f = value; break;
  case SweepAxis::HarvestPower: s.circuit.harvester.power_w = value; break;
  case SweepAxis::Granularity: s.granularity = static_cast<int>(std::lround(value)); break;
  }
  return s;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> v;
  for (int pct = 55; pct <= 98; ++pct)
    v.push_back(pct / 100.0);
  return v;
}

void validate(const SweepSpec& spec) {
  if (spec.values.empty())
    throw DomainError("sweep has no axis values");
  if (!std::is_sorted(spec.values.begin(), spec.values.end()))
    throw DomainError("sweep axis values must be ascending");
  if (spec.axis == SweepAxis::Threshold)
    for (double v : spec.values)
      if (v < 0.55 - 1e-12 || v > 0.98 + 1e-12)
        throw DomainError("threshold fractions must lie within [0.55, 0.98]");
  if (spec.sim_seeds < 1 || spec.sim_transmissions < 1)
    throw DomainError("simulator seeds and transmissions must be >= 1");
}

Metrics simulate_average(const Scenario& scenario, int seeds, long transmissions) {
  Metrics m;
  for (int seed = 1; seed <= seeds; ++seed) {
    SimOptions opt;
    opt.seed = static_cast<std::uint64_t>(seed);
    opt.n_scheduled = transmissions;
    const SimStats st = run_simulation(scenario, opt).stats;
    m.pdr += st.pdr;
    m.pdl1 += st.pdl1;
    m.pdl2 += st.pdl2;
  }
  m.pdr /= seeds;
  m.pdl1 /= seeds;
  m.pdl2 /= seeds;
  return m;
}

std::string_view to_string(Engine engine) noexcept {
  switch (engine) {
  case Engine::Simulator: return "simulator";
  case Engine::Chain: return "chain";
  case Engine::Both: return "both";
  }
  return "?";
}

Engine engine_from_string(std::string_view name) {
  for (auto e : {Engine::Simulator, Engine::Chain, Engine::Both})
    if (to_string(e) == name)
      return e;
  throw DomainError("engine must be one of simulator, chain, both");
}

std::string_view to_string(CellStatus status) noexcept {
  switch (status) {
  case CellStatus::Ok: return "ok";
  case CellStatus::Infeasible: return "infeasible";
  case CellStatus::Invalid: return "invalid";
  }
  return "?";
}

std::vector<SweepRow> threshold_sweep(const SweepSpec& spec, Engine engine) {
  validate(spec);
  const std::vector<double> intervals =
      spec.intervals.empty() ? std::vector<double>{spec.base.interval_m} : spec.intervals;
  const std::size_t n = spec.values.size() * intervals.size();
  return parallel_map<SweepRow>(n, spec.jobs, [&](std::size_t i) {
    SweepRow row;
    row.value = spec.values[i / intervals.size()];
    row.interval_m = intervals[i % intervals.size()];
    Scenario sc = apply_axis(spec.base, spec.axis, row.value);
    sc.interval_m = row.interval_m;
    try {
      validate(sc);
      if (engine != Engine::Chain)
        row.sim = simulate_average(sc, spec.sim_seeds, spec.sim_transmissions);
      if (engine != Engine::Simulator) {
        const ChainResult r = solve_chain(sc, sc.granularity);
        row.chain = Metrics{r.pdr, r.pdl1, r.pdl2};
      }
    } catch (const InfeasibleScenario& e) {
      row.status = CellStatus::Infeasible;
      row.note = e.what();
    } catch (const InvalidScenario& e) {
      row.status = CellStatus::Invalid;
      row.note = e.what();
    }
    if (row.status != CellStatus::Ok) {
      if (engine != Engine::Chain)
        row.sim = Metrics{};
      if (engine != Engine::Simulator)
        row.chain = Metrics{};
    }
    return row;
  });
}

std::string_view to_string(CycleQuantity q) noexcept {
  switch (q) {
  case CycleQuantity::RequiredVoltage: return "required_voltage";
  case CycleQuantity::MinCapacitance: return "min_capacitance";
  case CycleQuantity::MinInterval: return "min_interval";
  }
  return "?";
}

std::vector<CycleRow> cycle_sweep(const SweepSpec& spec, CycleQuantity quantity,
                                  const BisectionSettings& bis) {
  validate(spec);
  return parallel_map<CycleRow>(spec.values.size(), spec.jobs, [&](std::size_t i) {
    CycleRow row;
    row.value = spec.values[i];
    const Scenario sc = apply_axis(spec.base, spec.axis, row.value);
    switch (quantity) {
    case CycleQuantity::RequiredVoltage:
      row.result = required_cycle_voltage(sc, spec.dl_case, bis);
      break;
    case CycleQuantity::MinCapacitance:
      try {
        row.result = min_capacitance(sc, spec.dl_case, bis);
      } catch (const NoFeasibleCapacitance&) {
      }
      break;
    case CycleQuantity::MinInterval:
      row.result = min_tx_interval(sc, spec.dl_case, bis);
      break;
    }
    return row;
  });
}

std::string_view to_string(MClass m) noexcept {
  switch (m) {
  case MClass::Small: return "small";
  case MClass::Medium: return "medium";
  case MClass::High: return "high";
  case MClass::VeryHigh: return "very_high";
  }
  return "?";
}

const std::array<AccuracyCase, 5>& accuracy_cases() {
  static const std::array<AccuracyCase, 5> cases = {{
      {'A', 7, 8, 1e-3, {5, 10, 35, 40}},
      {'B', 7, 48, 1e-3, {15, 20, 60, 65}},
      {'C', 9, 48, 1e-2, {5, 10, 35, 40}},
      {'D', 7, 16, 1e-3, {5, 10, 40, 45}},
      {'E', 9, 16, 1e-3, {15, 30, 100, 250}},
  }};
  return cases;
}

std::vector<AccuracyRow> accuracy_study(const AccuracyOptions& options) {
  struct Cell {
    const AccuracyCase* c;
    MClass m;
    std::array<double, 2> p;
    double threshold;
  };
  std::vector<Cell> cells;
  for (char id : options.cases) {
    const auto& all = accuracy_cases();
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& c) { return c.id == id; });
    if (it == all.end())
      throw DomainError(std::string("unknown accuracy case '") + id + "'");
    for (MClass m : options.m_classes)
      for (const auto& p : kAccuracyDownlinkMix)
        for (double th : options.thresholds)
          cells.push_back({&*it, m, p, th});
  }

  auto per_cell = parallel_map<std::vector<AccuracyRow>>(
      cells.size(), options.jobs, [&](std::size_t i) {
        const Cell& cell = cells[i];
        Scenario sc;
        sc.radio.sf = cell.c->sf;
        sc.ul_pl = cell.c->ul_pl;
        sc.dl_pl = 1;
        sc.circuit.capacitor.capacitance_f = 4.7e-3;
        sc.circuit.harvester.power_w = cell.c->power_w;
        sc.circuit.thresholds.turn_on_fraction = cell.threshold;
        sc.interval_m = cell.c->intervals[static_cast<std::size_t>(cell.m)];
        sc.p1 = cell.p[0];
        sc.p2 = cell.p[1];
        const double sim = simulate_average(sc, options.sim_seeds, options.sim_transmissions).pdr;

        std::vector<AccuracyRow> rows;
        for (int g : options.granularities) {
          AccuracyRow r;
          r.case_id = cell.c->id;
          r.m_class = cell.m;
          r.interval_m = sc.interval_m;
          r.p1 = sc.p1;
          r.p2 = sc.p2;
          r.threshold = cell.threshold;
          r.granularity = g;
          r.pdr_sim = sim;
          const auto t0 = std::chrono::steady_clock::now();
          try {
            r.pdr_mc = solve_chain(sc, g).pdr;
          } catch (const InfeasibleScenario&) {
            r.pdr_mc = 0.0;
          }
          r.chain_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          r.abs_error = std::abs(r.pdr_sim - r.pdr_mc);
          rows.push_back(r);
        }
        return rows;
      });

  std::vector<AccuracyRow> out;
  for (auto& rows : per_cell)
    out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

namespace {

double percentile(std::vector<double> v, double q) {
  if (v.empty())
    return 0.0;
  std::sort(v.begin(), v.end());
  // nearest rank
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

bool same_cell(const AccuracyRow& r, double threshold, int granularity) {
  return std::abs(r.threshold - threshold) < 1e-9 && r.granularity == granularity;
}

} // namespace

std::vector<AccuracySummary> summarize(const std::vector<AccuracyRow>& rows) {
  std::vector<AccuracySummary> out;
  for (const auto& r : rows) {
    if (std::any_of(out.begin(), out.end(), [&](const auto& s) {
          return std::abs(s.threshold - r.threshold) < 1e-9 && s.granularity == r.granularity;
        }))
      continue;
    AccuracySummary s;
    s.threshold = r.threshold;
    s.granularity = r.granularity;
    std::vector<double> errs;
    double secs = 0.0;
    for (const auto& q : rows)
      if (same_cell(q, r.threshold, r.granularity)) {
        errs.push_back(q.abs_error);
        secs += q.chain_seconds;
      }
    s.cells = errs.size();
    s.p50 = percentile(errs, 0.5);
    s.p90 = percentile(errs, 0.9);
    s.max = *std::max_element(errs.begin(), errs.end());
    s.mean_chain_seconds = secs / static_cast<double>(errs.size());
    out.push_back(s);
  }
  return out;
}

double fraction_below(const std::vector<AccuracyRow>& rows, double threshold, int granularity,
                      double bound) {
  std::size_t n = 0, ok = 0;
  for (const auto& r : rows)
    if (same_cell(r, threshold, granularity)) {
      ++n;
      ok += r.abs_error < bound;
    }
  return n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
}

} // namespace blora

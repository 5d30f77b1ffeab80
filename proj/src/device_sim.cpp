#include "blora/device_sim.hpp"

#include "blora/errors.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace blora {

namespace {

enum class WindowOutcome { NotReached, Undetected, Success, Aborted };

struct CycleOutcome {
  bool tx_success = false;
  WindowOutcome rx1 = WindowOutcome::NotReached;
  WindowOutcome rx2 = WindowOutcome::NotReached;
};

// Tracks the stored charge (as the capacitor voltage) and the on/off flag.
class Device {
public:
  Device(const Scenario& sc, std::vector<TracePoint>* trace, double trace_step)
      : c_(sc.circuit), sched_(sc.schedule()), trace_(trace), trace_step_(trace_step) {}

  void power_on_at(double v_load, double t) {
    vc_ = capacitor_voltage_for_load(c_, DeviceState::Sleep, v_load);
    on_ = true;
    t_ = t;
  }

  void power_off_at(double v_load, double t) {
    vc_ = capacitor_voltage_for_load(c_, DeviceState::Off, v_load);
    on_ = false;
    t_ = t;
  }

  [[nodiscard]] bool on() const noexcept { return on_; }
  [[nodiscard]] double time() const noexcept { return t_; }
  [[nodiscard]] double capacitor_voltage() const noexcept { return vc_; }

  [[nodiscard]] double load_voltage() const {
    return voltage_after(c_, on_ ? DeviceState::Sleep : DeviceState::Off, vc_, 0.0);
  }

  [[nodiscard]] bool can_ever_wake() const {
    return on_ || time_to_voltage(c_, DeviceState::Off, vc_, c_.v_sl()).has_value() ||
           load_voltage() >= c_.v_sl();
  }

  // Runs `state` for `duration`. Returns false if v_min is crossed, in which
  // case the device is left Off at the crossing instant.
  bool run_phase(DeviceState state, double duration) {
    const double v_start = voltage_after(c_, state, vc_, 0.0);
    double t_cross = -1.0;
    if (v_start < c_.v_min()) {
      t_cross = 0.0;
    } else if (voltage_after(c_, state, vc_, duration) < c_.v_min()) {
      t_cross = time_to_voltage(c_, state, vc_, c_.v_min()).value_or(duration);
    }
    record_span(state, t_cross < 0.0 ? duration : t_cross);
    if (t_cross < 0.0) {
      vc_ = capacitor_voltage_after(c_, state, vc_, duration);
      t_ += duration;
      return true;
    }
    // The load sits exactly at v_min when it shuts down.
    vc_ = c_.capacitor.ideal() ? c_.v_min() : capacitor_voltage_after(c_, state, vc_, t_cross);
    t_ += t_cross;
    on_ = false;
    record(DeviceState::Off);
    return false;
  }

  // Off/Sleep evolution up to absolute time `target`.
  void idle_until(double target) {
    while (t_ < target) {
      const double remaining = target - t_;
      if (on_) {
        run_phase(DeviceState::Sleep, remaining);
        continue;
      }
      const double v_sl = c_.v_sl();
      std::optional<double> t_wake;
      if (voltage_after(c_, DeviceState::Off, vc_, 0.0) >= v_sl)
        t_wake = 0.0;
      else
        t_wake = time_to_voltage(c_, DeviceState::Off, vc_, v_sl);
      record_span(DeviceState::Off, t_wake && *t_wake < remaining ? *t_wake : remaining);
      if (t_wake && *t_wake < remaining) {
        vc_ = c_.capacitor.ideal() ? v_sl : capacitor_voltage_after(c_, DeviceState::Off, vc_, *t_wake);
        t_ += *t_wake;
        on_ = true;
        record(DeviceState::Sleep);
      } else {
        vc_ = capacitor_voltage_after(c_, DeviceState::Off, vc_, remaining);
        t_ = target;
      }
    }
  }

  template <class DrawRx1, class DrawRx2>
  CycleOutcome run_cycle(DrawRx1&& detect_rx1, DrawRx2&& detect_rx2) {
    CycleOutcome out;
    if (!run_phase(DeviceState::Tx, sched_.t_tx))
      return out;
    out.tx_success = true;
    if (!run_phase(DeviceState::Idle, sched_.t_id1))
      return out;

    if (detect_rx1()) {
      out.rx1 = run_phase(DeviceState::Rx, sched_.t_rx1) ? WindowOutcome::Success
                                                          : WindowOutcome::Aborted;
      end_cycle();
      return out;
    }
    out.rx1 = WindowOutcome::Undetected;
    if (!run_phase(DeviceState::Listen, sched_.t_l1) || !run_phase(DeviceState::Idle, sched_.t_id2))
      return out;

    if (detect_rx2()) {
      out.rx2 = run_phase(DeviceState::Rx, sched_.t_rx2) ? WindowOutcome::Success
                                                          : WindowOutcome::Aborted;
    } else {
      out.rx2 = WindowOutcome::Undetected;
      run_phase(DeviceState::Listen, sched_.t_l2);
    }
    end_cycle();
    return out;
  }

  void finish_trace() { record(on_ ? DeviceState::Sleep : DeviceState::Off); }

private:
  void end_cycle() {
    if (on_)
      record(DeviceState::Sleep);
  }

  void record(DeviceState state) { push(t_, voltage_after(c_, state, vc_, 0.0), state); }

  // Boundary point at the start of a phase plus optional interior samples.
  void record_span(DeviceState state, double duration) {
    if (!trace_)
      return;
    record(state);
    if (trace_step_ <= 0.0)
      return;
    for (double dt = trace_step_; dt < duration; dt += trace_step_)
      push(t_ + dt, voltage_after(c_, state, vc_, dt), state);
  }

  void push(double t, double v, DeviceState state) {
    if (!trace_)
      return;
    if (!trace_->empty() && t <= trace_->back().time_s) {
      trace_->back().voltage_v = v;
      trace_->back().state = state;
      return;
    }
    trace_->push_back({t, v, state});
  }

  const CircuitConfig& c_;
  TimingSchedule sched_;
  std::vector<TracePoint>* trace_;
  double trace_step_;
  double vc_ = 0.0;
  bool on_ = false;
  double t_ = 0.0;
};

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

} // namespace

std::string_view to_string(DlCase c) noexcept {
  switch (c) {
  case DlCase::None: return "none";
  case DlCase::Rx1: return "rx1";
  case DlCase::Rx2: return "rx2";
  }
  return "none";
}

DlCase dl_case_from_string(std::string_view name) {
  if (name == "none") return DlCase::None;
  if (name == "rx1") return DlCase::Rx1;
  if (name == "rx2") return DlCase::Rx2;
  throw DomainError("dl case must be one of none, rx1, rx2");
}

SimResult run_simulation(const Scenario& sc, const SimOptions& opt) {
  validate(sc);
  if (opt.n_scheduled < 1)
    throw DomainError("n_scheduled must be >= 1");

  SimResult result;
  Device dev(sc, opt.record_trace ? &result.trace : nullptr, opt.trace_step_s);
  dev.power_off_at(sc.circuit.v_min(), 0.0);
  BernoulliStream rng(opt.seed);

  SimStats& st = result.stats;
  bool counting = !opt.discard_cold_start || !dev.can_ever_wake();
  for (long k = 0; st.n_scheduled < opt.n_scheduled; ++k) {
    dev.idle_until(static_cast<double>(k) * sc.interval_m);
    counting = counting || dev.on();
    if (!dev.on()) {
      if (counting) {
        ++st.n_scheduled;
        ++st.n_tx_lost_off;
      }
      continue;
    }
    const CycleOutcome out =
        dev.run_cycle([&] { return rng.draw(sc.p1); }, [&] { return rng.draw(sc.p2); });
    ++st.n_scheduled;
    ++(out.tx_success ? st.n_tx_success : st.n_tx_aborted);
    st.n_dl1_success += out.rx1 == WindowOutcome::Success;
    st.n_dl1_aborted += out.rx1 == WindowOutcome::Aborted;
    st.n_dl2_success += out.rx2 == WindowOutcome::Success;
    st.n_dl2_aborted += out.rx2 == WindowOutcome::Aborted;
  }
  if (opt.record_trace)
    dev.finish_trace();

  st.pdr = ratio(st.n_tx_success, st.n_scheduled);
  st.pdl1 = ratio(st.n_dl1_success, st.n_scheduled);
  st.pdl2 = ratio(st.n_dl2_success, st.n_scheduled);
  return result;
}

CycleTrace single_cycle_trace(const Scenario& sc, double v_start, DlCase dl_case) {
  if (!(v_start >= 0.0))
    throw DomainError("start voltage must be non-negative");
  CycleTrace ct;
  Device dev(sc, &ct.trace, 0.0);
  dev.power_on_at(v_start, 0.0);
  (void)dev.run_cycle([&] { return dl_case == DlCase::Rx1; },
                      [&] { return dl_case == DlCase::Rx2; });
  // Any v_min crossing leaves the device Off; the last point is the end state.
  ct.completed = dev.on();
  ct.final_voltage = ct.trace.back().voltage_v;
  return ct;
}

void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace) {
  out << "time_s,voltage_v,state\n";
  char buf[96];
  for (const TracePoint& p : trace) {
    std::snprintf(buf, sizeof buf, "%.9g,%.6g,", p.time_s, p.voltage_v);
    out << buf << to_string(p.state) << '\n';
  }
}

} // namespace blora

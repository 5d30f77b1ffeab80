#include "blora/lora_timing.hpp"

#include "blora/errors.hpp"

#include <algorithm>
#include <cmath>

namespace blora {

namespace {

// ceil(num / den) for den > 0, exact for negative numerators too.
int ceil_div(int num, int den) {
  const int q = num / den;
  return (num % den != 0 && num > 0) ? q + 1 : q;
}

} // namespace

void validate(const RadioConfig& r) {
  if (r.sf < 7 || r.sf > 12)
    throw DomainError("radio.sf must be in 7..12");
  if (!(r.bw_hz > 0.0) || !std::isfinite(r.bw_hz))
    throw DomainError("radio.bw_hz must be positive");
  if (r.cr_index < 1 || r.cr_index > 4)
    throw DomainError("radio.coding_rate must be one of 4/5, 4/6, 4/7, 4/8");
  if (r.n_preamble < 0)
    throw DomainError("radio.n_preamble must be >= 0");
}

int parse_coding_rate(std::string_view text) {
  if (text.size() == 3 && text[0] == '4' && text[1] == '/' && text[2] >= '5' && text[2] <= '8')
    return text[2] - '4';
  throw DomainError("coding rate must be one of 4/5, 4/6, 4/7, 4/8");
}

std::string coding_rate_string(int cr_index) {
  if (cr_index < 1 || cr_index > 4)
    throw DomainError("coding rate index must be in 1..4");
  return "4/" + std::to_string(4 + cr_index);
}

double symbol_time(int sf, double bw_hz) {
  if (!(bw_hz > 0.0))
    throw DomainError("bandwidth must be positive");
  return std::ldexp(1.0, sf) / bw_hz;
}

double preamble_time(int sf, double bw_hz, int n_preamble) {
  if (n_preamble < 0)
    throw DomainError("n_preamble must be >= 0");
  return (n_preamble + 4.25) * symbol_time(sf, bw_hz);
}

int payload_symbols(int pl, int sf, bool implicit_header, bool low_dr_optimize, int cr_index) {
  if (pl < 1)
    throw DomainError("payload must be at least 1 byte");
  const int ih = implicit_header ? 1 : 0;
  const int de = low_dr_optimize ? 1 : 0;
  const int num = 8 * pl - 4 * sf + 28 + 16 - 20 * ih;
  const int den = 4 * (sf - 2 * de);
  return 8 + std::max(ceil_div(num, den) * (cr_index + 4), 0);
}

double time_on_air(const RadioConfig& r, int pl) {
  const int symbols = payload_symbols(pl, r.sf, r.implicit_header, r.low_dr_optimize, r.cr_index);
  return preamble_time(r.sf, r.bw_hz, r.n_preamble) + symbols * symbol_time(r.sf, r.bw_hz);
}

TimingSchedule class_a_schedule(const RadioConfig& radio, int ul_pl, int dl_pl) {
  validate(radio);
  RadioConfig rx2 = radio;
  rx2.sf = kRx2SpreadingFactor;

  TimingSchedule s;
  s.t_tx = time_on_air(radio, ul_pl);
  s.t_id1 = kRx1Delay;
  s.t_l1 = preamble_time(radio.sf, radio.bw_hz, radio.n_preamble);
  if (s.t_l1 >= kRx1Delay)
    throw NegativeIdle("RX1 preamble time exceeds the 1 s gap before RX2");
  s.t_id2 = kRx1Delay - s.t_l1;
  s.t_rx1 = time_on_air(radio, dl_pl);
  s.t_l2 = preamble_time(rx2.sf, rx2.bw_hz, rx2.n_preamble);
  s.t_rx2 = time_on_air(rx2, dl_pl);
  return s;
}

double min_interval_bound(const TimingSchedule& s) {
  return s.t_tx + s.t_id1 + s.t_l1 + s.t_id2 + std::max(s.t_rx2, s.t_l2);
}

bool payload_outside_frame_range(int pl) noexcept { return pl < 13 || pl > 51; }

} // namespace blora

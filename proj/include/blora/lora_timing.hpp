#pragma once

// LoRa PHY airtime and the LoRaWAN Class A receive-window schedule.

#include <string>
#include <string_view>

namespace blora {

struct RadioConfig {
  int sf = 7;
  double bw_hz = 125'000.0;
  int cr_index = 1; ///< 1..4, coding rate 4/(4 + cr_index)
  int n_preamble = 8;
  bool implicit_header = true; ///< IH
  bool low_dr_optimize = false; ///< DE
  double tx_power_dbm = 13.0;

  friend bool operator==(const RadioConfig&, const RadioConfig&) = default;
};

/// Throws DomainError on out-of-range fields.
void validate(const RadioConfig& radio);

/// "4/5" .. "4/8" -> 1 .. 4
[[nodiscard]] int parse_coding_rate(std::string_view text);
[[nodiscard]] std::string coding_rate_string(int cr_index);

/// Durations (seconds) of the phases following one uplink.
struct TimingSchedule {
  double t_tx = 0;  ///< uplink airtime
  double t_id1 = 0; ///< idle before RX1, always 1 s
  double t_l1 = 0;  ///< RX1 preamble listen
  double t_id2 = 0; ///< idle between RX1 and RX2, 1 s - t_l1
  double t_l2 = 0;  ///< RX2 preamble listen at SF12
  double t_rx1 = 0; ///< downlink airtime in RX1
  double t_rx2 = 0; ///< downlink airtime in RX2 at SF12
};

inline constexpr int kRx2SpreadingFactor = 12;
inline constexpr double kRx1Delay = 1.0;

/// T_sym = 2^SF / BW
[[nodiscard]] double symbol_time(int sf, double bw_hz);

/// (n_preamble + 4.25) T_sym
[[nodiscard]] double preamble_time(int sf, double bw_hz, int n_preamble);

/// 8 + max(ceil((8PL - 4SF + 28 + 16 - 20IH) / (4(SF - 2DE))) (CR + 4), 0),
/// evaluated in integer arithmetic.
[[nodiscard]] int payload_symbols(int pl, int sf, bool implicit_header, bool low_dr_optimize,
                                  int cr_index);

[[nodiscard]] double time_on_air(const RadioConfig& radio, int pl);

/// Throws NegativeIdle when the RX1 preamble does not fit in the 1 s gap.
[[nodiscard]] TimingSchedule class_a_schedule(const RadioConfig& radio, int ul_pl, int dl_pl);

/// Right-hand side of M > T_tx + T_id1 + T_l1 + T_id2 + max(T_rx2, T_l2).
[[nodiscard]] double min_interval_bound(const TimingSchedule& sched);

/// True when pl is outside the 13..51 byte LoRaWAN frame range.
[[nodiscard]] bool payload_outside_frame_range(int pl) noexcept;

} // namespace blora

#pragma once

// Adversary probes against the functional model. Each probe reports how many
// attacks were caught and how many slipped through; the suite passes only
// with zero misses and zero false alarms.

#include <cstdint>
#include <string>
#include <vector>

namespace ess {

struct ProbeResult {
  std::string name;
  std::uint64_t trials = 0;
  std::uint64_t attacks = 0;
  std::uint64_t detected = 0;
  // Attacks whose effect reached enclave code unnoticed.
  std::uint64_t undetected = 0;
  // Legitimate operations the model wrongly rejected.
  std::uint64_t false_alarms = 0;

  bool passed() const { return undetected == 0 && false_alarms == 0 && detected == attacks; }
};

struct SecurityConfig {
  std::uint64_t seed = 1;
  std::size_t adversary_schedules = 1000;
  std::size_t tcs_schedules = 1000;
  std::size_t env_swap_trials = 200;
  std::size_t steps_per_schedule = 24;
};

// Every page-table assignment of a 4-page enclave's range, in each of three
// address spaces, against an independently kept ground-truth EPCM.
ProbeResult probe_remap_exhaustive();
ProbeResult probe_adversary_schedules(const SecurityConfig& config);
ProbeResult probe_tcs_exclusivity(const SecurityConfig& config);
ProbeResult probe_environment_swap(const SecurityConfig& config);

std::vector<ProbeResult> run_security_suite(const SecurityConfig& config);

}  // namespace ess

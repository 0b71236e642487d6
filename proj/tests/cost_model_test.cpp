#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "ess/cost_model.hpp"
#include "ess/types.hpp"

namespace ess {
namespace {

// Latency of one request on an idle system, rebuilt from the parameters.
double teemate_single(const CostParams& p, const std::string& w) {
  return p.t_container_create + p.t_alias + p.t_tcs_op +
         static_cast<double>(p.instance_pages()) * p.t_epc_alloc_per_page + p.t_instance_load_teemate +
         p.exec_ms(w);
}
double cc_single(const CostParams& p, const std::string& w) {
  return p.t_container_create + p.t_enclave_create + p.t_instance_load_cold + p.exec_ms(w);
}

TEST(Calibration, ContainerCreateFromRatioMidpoint) {
  const double mid = (16.8 + 17.4) / 2.0;
  const double solved = 10000.0 / mid;
  const CostParams p = default_params();
  EXPECT_NEAR(p.t_container_create, solved, 0.5);
  const double ratio = p.t_enclave_create / p.t_container_create;
  EXPECT_GE(ratio, 16.8);
  EXPECT_LE(ratio, 17.4);
}

TEST(Calibration, PerInstanceMemoryScan) {
  std::vector<int> inside;
  int best = 0;
  double best_gap = 1e9;
  for (int f = 5; f <= 50; ++f) {
    const double r = (64.0 * 114.0) / (207.0 + 64.0 * f);
    if (r >= 2.8 && r <= 5.0) {
      inside.push_back(f);
      if (std::abs(r - 3.9) < best_gap) {
        best_gap = std::abs(r - 3.9);
        best = f;
      }
    }
  }
  ASSERT_FALSE(inside.empty());
  EXPECT_EQ(inside.front(), 20);
  EXPECT_EQ(inside.back(), 37);
  EXPECT_EQ(best, 26);
  const CostParams p = default_params();
  const double chosen = (64.0 * 114.0) / (207.0 + 64.0 * p.m_teemate_per_instance);
  EXPECT_GE(chosen, 2.8);
  EXPECT_LE(chosen, 5.0);
  EXPECT_LE(std::abs(p.m_teemate_per_instance - best), 1.0);
}

TEST(Calibration, InstancePagesMatchInstanceMemory) {
  const CostParams p = default_params();
  EXPECT_EQ(p.instance_pages(), 6400U);
  EXPECT_NEAR(static_cast<double>(p.instance_pages()) * p.page_mib, p.m_teemate_per_instance, 1e-9);
  EXPECT_NEAR(p.epc_expand_ms(), 710.0, 1e-9);
}

TEST(Calibration, EveryWorkloadInsideLatencyAndExpandBands) {
  const CostParams p = default_params();
  ASSERT_EQ(workload_names().size(), 9U);
  double lo_share = 1.0;
  double hi_share = 0.0;
  for (const std::string& w : workload_names()) {
    const double tee = teemate_single(p, w);
    const double speedup = cc_single(p, w) / tee;
    EXPECT_GE(speedup, 4.54) << w;
    EXPECT_LE(speedup, 6.98) << w;
    const double share = p.epc_expand_ms() / tee;
    EXPECT_GE(share, 0.274) << w;
    EXPECT_LE(share, 0.456) << w;
    lo_share = std::min(lo_share, share);
    hi_share = std::max(hi_share, share);
    EXPECT_LT(p.t_alias / tee, 0.01) << w;
  }
  // The table spans the band edge to edge.
  EXPECT_NEAR(lo_share, 0.28, 0.002);
  EXPECT_NEAR(hi_share, 0.45, 0.002);
}

TEST(Calibration, ExecTableSolvesForTargetShares) {
  // Expand shares the table was solved for, largest first; both band edges included.
  const std::array<double, 9> shares = {0.45, 0.43, 0.41, 0.39, 0.37, 0.35, 0.33, 0.305, 0.28};
  const CostParams p = default_params();
  std::vector<std::pair<double, std::string>> by_exec;
  for (const std::string& w : workload_names()) by_exec.emplace_back(p.exec_ms(w), w);
  std::sort(by_exec.begin(), by_exec.end());
  const double fixed = p.t_container_create + p.t_alias + p.t_tcs_op + p.epc_expand_ms() + p.t_instance_load_teemate;
  for (std::size_t i = 0; i < by_exec.size(); ++i) {
    const double exec = p.epc_expand_ms() / shares[i] - fixed;
    EXPECT_NEAR(by_exec[i].first, exec, 0.5) << by_exec[i].second;
  }
}

TEST(Calibration, DatabaseForkRatios) {
  const CostParams p = default_params();
  for (double db : {128.0, 256.0, 512.0}) {
    const double ratio = (p.t_enclave_create + p.copy_rate_ms_per_mib * db) / (p.t_fork_process + p.t_alias + p.t_tcs_op);
    EXPECT_NEAR(p.t_fork_strawman(db) / p.t_fork_teemate(), ratio, 1e-9);
    EXPECT_GE(ratio, 277.6);
    EXPECT_LE(ratio, 1046.6);
  }
}

TEST(Params, UnknownWorkloadThrows) {
  EXPECT_THROW(default_params().exec_ms("nope"), Error);
}

TEST(Params, SetAndValidate) {
  CostParams p = default_params();
  EXPECT_TRUE(CostParams::is_key("t_alias"));
  EXPECT_TRUE(CostParams::is_key("t_exec.sleep"));
  EXPECT_TRUE(CostParams::is_key("epc_alloc_serialized"));
  EXPECT_FALSE(CostParams::is_key("t_exec."));
  EXPECT_FALSE(CostParams::is_key("t_bogus"));

  p.set("t_alias", "3.5");
  EXPECT_DOUBLE_EQ(p.t_alias, 3.5);
  p.set("t_exec.custom", "12");
  EXPECT_DOUBLE_EQ(p.exec_ms("custom"), 12.0);
  p.set("epc_alloc_serialized", "false");
  EXPECT_FALSE(p.epc_alloc_serialized);
  p.set("epc_alloc_serialized", "1");
  EXPECT_TRUE(p.epc_alloc_serialized);

  try {
    p.set("t_bogus", "1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNotFound);
  }
  try {
    p.set("t_alias", "1.5x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInvalidArgument);
  }
  EXPECT_THROW(p.set("epc_alloc_serialized", "maybe"), Error);

  EXPECT_NO_THROW(default_params().validate());
  CostParams bad = default_params();
  bad.t_alias = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = default_params();
  bad.t_enclave_epc_locked = bad.t_enclave_create + 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = default_params();
  bad.m_teemate_per_instance = bad.m_teemate_base + 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Ledger, ComponentsSumToTotal) {
  CostLedger l;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 100.0);
  for (int r = 0; r < 50; ++r) {
    const std::size_t i = l.open_request(static_cast<std::uint64_t>(r), d(rng));
    double sum = 0.0;
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      const double ms = d(rng);
      l.charge(i, static_cast<Component>(c), ms);
      l.charge(i, static_cast<Component>(c), 1.0);
      sum += ms + 1.0;
    }
    l.close_request(i, l.request(i).arrival_ms + sum);
    EXPECT_NEAR(l.request(i).total(), sum, 1e-9);
    EXPECT_NEAR(l.request(i).finish_ms - l.request(i).arrival_ms, l.request(i).total(), 1e-9);
  }
  EXPECT_EQ(l.requests().size(), 50U);
}

TEST(Ledger, NegativeOrNanDurationRejected) {
  CostLedger l;
  const std::size_t i = l.open_request(0, 0.0);
  try {
    l.charge(i, Component::kExec, -1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNegativeDuration);
  }
  EXPECT_THROW(l.charge(i, Component::kExec, std::nan("")), Error);
  EXPECT_EQ(l.request(i).total(), 0.0);
}

TEST(Ledger, PeakIsMaxPrefixSum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    CostLedger l;
    double level = 0.0;
    double peak = 0.0;
    const int n = 1 + static_cast<int>(rng() % 200);
    for (int s = 0; s < n; ++s) {
      double delta = static_cast<double>(rng() % 200);
      if (rng() % 2 == 0) delta = -std::min(delta, level);
      l.occupy(static_cast<double>(s), delta);
      level += delta;
      peak = std::max(peak, level);
    }
    EXPECT_NEAR(l.peak_epc(), peak, 1e-9);
    EXPECT_NEAR(l.occupancy(), level, 1e-9);
    EXPECT_EQ(l.timeline().size(), static_cast<std::size_t>(n));
  }
}

TEST(Ledger, OccupancyCannotGoNegative) {
  CostLedger l;
  l.occupy(0.0, 10.0);
  try {
    l.occupy(1.0, -10.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNegativeOccupancy);
  }
  EXPECT_DOUBLE_EQ(l.occupancy(), 10.0);
  l.occupy(2.0, -10.0);
  EXPECT_DOUBLE_EQ(l.occupancy(), 0.0);
}

TEST(Ledger, ComponentNames) {
  EXPECT_EQ(to_string(Component::kEpcExpand), "epc_expand");
  EXPECT_EQ(to_string(Component::kQueueWait), "queue_wait");
}

}  // namespace
}  // namespace ess

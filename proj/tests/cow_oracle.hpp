#pragma once

// Random parent/child interleavings over a small data extent, checked against
// an eager-copy fork that duplicates every page at fork time.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ess/enclave_runtime.hpp"

namespace ess::oracle {

struct CowOracleReport {
  std::size_t trials = 0;
  std::size_t ops = 0;
  std::size_t forks = 0;
  std::size_t cow_writes = 0;
  std::size_t mismatches = 0;
  std::size_t accounting_errors = 0;
  std::string first_failure;

  bool ok() const { return mismatches == 0 && accounting_errors == 0; }
};

inline Digest oracle_digest(const std::vector<std::vector<std::byte>>& pages) {
  Measurement m;
  for (std::uint64_t i = 0; i < pages.size(); ++i) m.extend(Vpn{i}, PageType::kRegular, pages[i]);
  return m.digest();
}

inline CowOracleReport run_cow_oracle(std::uint64_t seed, std::size_t trials, std::size_t max_pages = 16,
                                      std::size_t max_ops = 200) {
  CowOracleReport rep;
  using Pages = std::vector<std::vector<std::byte>>;
  auto fail = [&rep](std::size_t& counter, const std::string& what) {
    ++counter;
    if (rep.first_failure.empty()) rep.first_failure = what;
  };

  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + trial);
    const std::uint64_t n = 1 + rng() % max_pages;
    const std::size_t ops = 1 + rng() % max_ops;

    Machine machine;
    Kernel kernel(machine);
    Pid parent = kernel.create_container("db", 0.0).pid;
    RuntimeLayout layout;
    layout.tcs_count = 2;
    layout.runtime_pages = 1;
    layout.instance_slots = 0;
    layout.data_pool_pages = 2 * n;
    machine.ecreate(runtime_enclave_config(EnclaveId{1}, layout));
    Runtime rt(kernel, EnclaveId{1}, parent, layout);
    rt.runtime_init(trial);
    rt.enter(parent);
    rt.create_data_extent(parent, n);

    Pages parent_view(n, std::vector<std::byte>(kPageSize));
    Pages child_view;
    std::optional<ForkPair> pair;
    std::set<std::uint64_t> privatized;
    std::uint64_t pages_before_fork = 0;
    ++rep.trials;

    auto view_matches = [&](Pid pid, const std::vector<std::byte>& expect, std::uint64_t idx) {
      PageBytes got = pair ? rt.cow_read(*pair, pid, idx) : rt.data_read(pid, idx);
      return std::equal(got.begin(), got.end(), expect.begin(), expect.end());
    };
    std::ostringstream where;

    for (std::size_t op = 0; op < ops; ++op) {
      ++rep.ops;
      where.str("");
      where << "trial " << trial << " op " << op;
      const std::uint64_t idx = rng() % n;
      const unsigned kind = static_cast<unsigned>(rng() % 10);
      std::vector<std::byte> value(1 + rng() % 32);
      for (auto& b : value) b = std::byte{static_cast<unsigned char>(rng())};
      const std::size_t off = rng() % (kPageSize - value.size() + 1);

      if (!pair) {
        if (kind < 2) {
          pages_before_fork = machine.epc_used_pages();
          pair = rt.fork_cow(parent, static_cast<double>(op));
          child_view = parent_view;
          ++rep.forks;
          privatized.clear();
          if (pair->dirty_count != 0 || machine.epc_used_pages() != pages_before_fork) {
            fail(rep.accounting_errors, where.str() + ": fork copied pages");
          }
        } else if (kind < 6) {
          rt.data_write(parent, idx, off, value);
          std::copy(value.begin(), value.end(), parent_view[idx].begin() + static_cast<std::ptrdiff_t>(off));
        } else if (!view_matches(parent, parent_view[idx], idx)) {
          fail(rep.mismatches, where.str() + ": parent read before fork");
        }
        continue;
      }

      const Pid child = pair->child_pid;
      if (kind == 0) {
        Digest d = rt.snapshot(*pair, child);
        if (d != oracle_digest(child_view)) fail(rep.mismatches, where.str() + ": snapshot digest");
        if (machine.epc_used_pages() != pages_before_fork) {
          fail(rep.accounting_errors, where.str() + ": snapshot did not restore occupancy");
        }
        pair.reset();
        continue;
      }
      const bool parent_side = kind % 2 == 1;
      const Pid who = parent_side ? parent : child;
      Pages& view = parent_side ? parent_view : child_view;
      if (kind < 6) {
        rt.cow_write(*pair, who, idx, off, value);
        std::copy(value.begin(), value.end(), view[idx].begin() + static_cast<std::ptrdiff_t>(off));
        privatized.insert(idx);
        ++rep.cow_writes;
      } else if (!view_matches(who, view[idx], idx)) {
        fail(rep.mismatches, where.str() + (parent_side ? ": parent view" : ": child view"));
      }
      const std::uint64_t extra = machine.epc_used_pages() - pages_before_fork;
      if (pair->dirty_count != privatized.size() || extra != privatized.size() ||
          pair->shared_pages.size() != n - privatized.size()) {
        fail(rep.accounting_errors, where.str() + ": extra pages != distinct privatizations");
      }
    }
    if (pair) {
      Digest d = rt.snapshot(*pair, pair->child_pid);
      if (d != oracle_digest(child_view)) fail(rep.mismatches, "trial " + std::to_string(trial) + ": final snapshot");
      if (machine.epc_used_pages() != pages_before_fork) {
        fail(rep.accounting_errors, "trial " + std::to_string(trial) + ": final occupancy");
      }
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      PageBytes got = rt.data_read(parent, i);
      if (!std::equal(got.begin(), got.end(), parent_view[i].begin(), parent_view[i].end())) {
        fail(rep.mismatches, "trial " + std::to_string(trial) + ": parent after snapshot");
      }
    }
  }
  return rep;
}

}  // namespace ess::oracle

#include "ess/security_suite.hpp"

#include <array>
#include <map>
#include <optional>
#include <random>

#include "ess/enclave_runtime.hpp"
#include "ess/host_kernel.hpp"
#include "ess/sgx_core.hpp"

namespace ess {
namespace {

std::vector<std::byte> random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::byte> out(n);
  for (auto& b : out) b = static_cast<std::byte>(rng() & 0xffU);
  return out;
}

std::uint64_t pick(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

// What the suite itself recorded about each physical page when creating it.
struct Truth {
  bool epc = false;
  bool valid = false;
  EnclaveId enclave{};
  Vpn va{};
  PageType type = PageType::kRegular;
};

bool correct_for(const Truth& t, Vpn va, CpuMode mode) {
  if (!mode.in_enclave) return !t.epc;
  return t.epc && t.valid && t.enclave == mode.enclave && t.va == va && t.type == PageType::kRegular;
}

// A shared runtime with two tenant containers.
struct World {
  Machine machine;
  Kernel kernel{machine};
  std::optional<Runtime> runtime;
  Pid a{};
  Pid b{};

  explicit World(RuntimeLayout layout) {
    a = kernel.create_container("tenant-a", 0.0).pid;
    b = kernel.create_container("tenant-b", 0.0).pid;
    EnclaveId id{1};
    machine.ecreate(runtime_enclave_config(id, layout));
    runtime.emplace(kernel, id, a, layout);
    runtime->runtime_init(42);
    runtime->alias_into(kernel.container(b));
  }
};

RuntimeLayout small_layout(std::uint64_t tcs) {
  RuntimeLayout l;
  l.base = Vpn{0x100};
  l.tcs_count = tcs;
  l.runtime_pages = 2;
  l.instance_slots = 2;
  l.instance_region_pages = 2;
  return l;
}

}  // namespace

ProbeResult probe_remap_exhaustive() {
  ProbeResult r{"remap_exhaustive"};
  Machine m;
  Kernel k(m);
  const Vpn base{0x10};
  constexpr std::uint64_t kPages = 4;
  std::vector<Pid> spaces;
  for (int s = 0; s < 3; ++s) spaces.push_back(k.create_container("s" + std::to_string(s), 0.0).pid);

  std::map<Ppn, Truth> truth;
  std::vector<Ppn> candidates;
  const EnclaveId e1{1};
  const EnclaveId e2{2};
  m.ecreate(EnclaveConfig{e1, base, kPages});
  m.ecreate(EnclaveConfig{e2, base, 3});
  for (std::uint64_t i = 0; i < kPages; ++i) {
    PageType type = i == 0 ? PageType::kTcs : PageType::kRegular;
    Ppn pa = m.eadd(e1, base + i, {}, type, base.value + 1).pa;
    truth[pa] = Truth{true, true, e1, base + i, type};
    candidates.push_back(pa);
  }
  for (std::uint64_t i = 0; i < 3; ++i) {
    Ppn pa = m.eadd(e2, base + i, {}, PageType::kRegular).pa;
    truth[pa] = Truth{true, true, e2, base + i, PageType::kRegular};
    candidates.push_back(pa);
  }
  m.einit(e1);
  m.einit(e2);
  // A page that was valid for e2 at base+2 and has since been removed.
  Ppn stale = m.eremove(e2, base + 2);
  truth[stale].valid = false;
  for (int i = 0; i < 2; ++i) {
    Ppn pa = m.alloc_regular_page();
    truth[pa] = Truth{};
    candidates.push_back(pa);
  }
  const std::size_t options = candidates.size() + 1;  // last option: unmapped

  const std::array modes = {CpuMode::enclave_mode(e1), CpuMode::enclave_mode(e2), CpuMode::non_enclave()};
  const std::array accesses = {Access::kRead, Access::kWrite, Access::kExecute};

  std::uint64_t total = 1;
  for (std::uint64_t i = 0; i < kPages; ++i) total *= options;

  for (Pid pid : spaces) {
    AddressSpace& space = k.container(pid).address_space;
    for (std::uint64_t code = 0; code < total; ++code) {
      std::array<std::optional<Ppn>, kPages> table{};
      std::uint64_t c = code;
      for (std::uint64_t i = 0; i < kPages; ++i) {
        std::size_t choice = c % options;
        c /= options;
        if (choice < candidates.size()) {
          table[i] = candidates[choice];
          Kernel::adversary_remap(space, base + i, candidates[choice]);
        } else {
          table[i].reset();
          space.unmap(base + i);
        }
      }
      ++r.trials;
      for (std::uint64_t i = 0; i < kPages; ++i) {
        const Vpn va = base + i;
        for (const CpuMode& mode : modes) {
          const bool expect_ok = table[i] && correct_for(truth[*table[i]], va, mode);
          for (Access acc : accesses) {
            Translation t = m.translate(space, va, acc, mode);
            // Enclave code only trusts EPC-backed translations; the runtime
            // rejects the rest before touching the data.
            const bool accepted = t.ok() && (mode.in_enclave ? t.epc() : true);
            if (expect_ok) {
              if (!accepted || t.pa() != *table[i]) ++r.false_alarms;
            } else {
              ++r.attacks;
              if (accepted) {
                ++r.undetected;
              } else {
                ++r.detected;
              }
            }
          }
        }
      }
    }
  }
  return r;
}

ProbeResult probe_adversary_schedules(const SecurityConfig& config) {
  ProbeResult r{"adversary_schedules"};
  for (std::size_t s = 0; s < config.adversary_schedules; ++s) {
    std::mt19937_64 rng(config.seed * 1000003ULL + s);
    World w(small_layout(2));
    Runtime& rt = *w.runtime;
    const Enclave& enc = w.machine.enclave(rt.enclave_id());
    const InstanceId ia = rt.instance_create(w.a, 2).id;
    const InstanceId ib = rt.instance_create(w.b, 2).id;
    rt.instance_start(ia);
    rt.instance_start(ib);

    // Ground truth kept by the suite: legitimate pa and expected bytes per va.
    std::map<Vpn, Ppn> legit(enc.pages.begin(), enc.pages.end());
    std::map<Vpn, std::vector<std::byte>> shadow;
    for (const auto& [va, pa] : legit) {
      auto bytes = w.machine.page_bytes(pa);
      shadow[va].assign(bytes.begin(), bytes.end());
    }
    std::vector<Ppn> pool;
    for (const auto& kv : legit) pool.push_back(kv.second);
    for (int i = 0; i < 2; ++i) {
      Ppn forged = w.machine.alloc_regular_page();
      auto dst = w.machine.mutable_page_bytes(forged);
      auto src = random_bytes(rng, kPageSize);
      std::copy(src.begin(), src.end(), dst.begin());
      pool.push_back(forged);
    }
    pool.push_back(Ppn{0xdead});  // nonexistent

    const std::array<InstanceId, 2> inst = {ia, ib};
    const std::array<Pid, 2> owner = {w.a, w.b};
    const Vpn lo = enc.base;
    const std::uint64_t span = enc.size_pages;
    ++r.trials;

    auto tampered = [&](Pid pid, Vpn va) {
      auto got = w.kernel.container(pid).address_space.lookup(va);
      auto it = legit.find(va);
      return it == legit.end() ? got.has_value() : got != it->second;
    };
    auto allowed = [&](std::size_t who, Vpn va, Access acc) {
      const FunctionInstance& fi = rt.instance(inst[who]);
      if (fi.in_region(va)) return legit.contains(va);
      const Vpn rb = rt.layout().runtime_base();
      bool runtime_page = va.value >= rb.value && va.value - rb.value < rt.layout().runtime_pages;
      return runtime_page && acc != Access::kWrite;
    };

    for (std::size_t step = 0; step < config.steps_per_schedule; ++step) {
      const std::size_t who = pick(rng, 2);
      const Pid pid = owner[who];
      switch (pick(rng, 5)) {
        case 0: {  // adversary remaps one enclave va in some container
          Pid victim = owner[pick(rng, 2)];
          Vpn va = lo + pick(rng, span);
          Kernel::adversary_remap(w.kernel.container(victim).address_space, va, pool[pick(rng, pool.size())]);
          break;
        }
        case 1: {  // adversary repairs a mapping
          Pid victim = owner[pick(rng, 2)];
          auto it = std::next(legit.begin(), static_cast<std::ptrdiff_t>(pick(rng, legit.size())));
          w.kernel.container(victim).address_space.map(it->first, it->second);
          break;
        }
        case 2:
        case 3: {  // instance read or write at an arbitrary enclave va
          const bool write = pick(rng, 2) == 0;
          const Access acc = write ? Access::kWrite : Access::kRead;
          const Vpn va = lo + pick(rng, span);
          const bool legal = allowed(who, va, acc);
          const bool attack = !legal || tampered(pid, va);
          std::vector<std::byte> data = random_bytes(rng, 16);
          const std::size_t off = pick(rng, kPageSize - data.size());
          bool ok = true;
          std::vector<std::byte> seen;
          try {
            if (write) {
              rt.instance_write(inst[who], va, off, data);
            } else {
              auto bytes = rt.instance_read(inst[who], va);
              seen.assign(bytes.begin(), bytes.end());
            }
          } catch (const Error&) {
            ok = false;
          }
          if (!ok) {
            if (attack) {
              ++r.attacks;
              ++r.detected;
            } else {
              ++r.false_alarms;
            }
            break;
          }
          if (attack) {
            // A successful access through a tampered or forbidden mapping.
            ++r.attacks;
            ++r.undetected;
            break;
          }
          auto& expect = shadow[va];
          if (write) {
            std::copy(data.begin(), data.end(), expect.begin() + static_cast<std::ptrdiff_t>(off));
            seen.assign(w.machine.page_bytes(legit.at(va)).begin(), w.machine.page_bytes(legit.at(va)).end());
          }
          if (seen != expect) ++r.undetected;
          break;
        }
        case 4: {  // host code touching enclave memory directly
          const Vpn va = lo + pick(rng, span);
          auto target = w.kernel.container(pid).address_space.lookup(va);
          const bool epc_target = target && w.machine.exists(*target) && w.machine.is_epc(*target);
          if (!epc_target) break;
          ++r.attacks;
          try {
            (void)w.machine.read(w.kernel.container(pid).address_space, va, CpuMode::non_enclave());
            ++r.undetected;
          } catch (const Error& e) {
            if (e.code() == Errc::kAbortPage) {
              ++r.detected;
            } else {
              ++r.undetected;
            }
          }
          break;
        }
      }
    }
  }
  return r;
}

ProbeResult probe_tcs_exclusivity(const SecurityConfig& config) {
  ProbeResult r{"tcs_exclusivity"};
  for (std::size_t s = 0; s < config.tcs_schedules; ++s) {
    std::mt19937_64 rng(config.seed * 7919ULL + s);
    World w(small_layout(3));
    Runtime& rt = *w.runtime;
    std::vector<Pid> pids = {w.a, w.b};
    for (int i = 0; i < 2; ++i) {
      Container& c = w.kernel.create_container("tenant-x" + std::to_string(i), 0.0);
      rt.alias_into(c);
      pids.push_back(c.pid);
    }
    TcsTable& table = rt.tcs_table();
    const EnclaveId id = rt.enclave_id();
    std::vector<Vpn> tcs_vas;
    for (const auto& row : table.rows()) tcs_vas.push_back(row.tcs_va);

    struct Session {
      Pid pid{};
      EnclaveThread thread;
      bool suspended = false;
    };
    std::map<Vpn, Session> sessions;
    std::vector<EnclaveThread> stale;
    auto space = [&](Pid p) -> const AddressSpace& { return w.kernel.container(p).address_space; };
    ++r.trials;

    for (std::size_t step = 0; step < config.steps_per_schedule; ++step) {
      switch (pick(rng, 6)) {
        case 0: {  // controller hands out a TCS and the process enters
          Pid p = pids[pick(rng, pids.size())];
          const bool full = table.free_count() == 0;
          try {
            Vpn va = table.acquire(p);
            sessions[va] = Session{p, w.machine.eenter(space(p), va)};
            if (full) ++r.false_alarms;
          } catch (const Error& e) {
            if (!(full && e.code() == Errc::kNoFreeTcs)) ++r.false_alarms;
          }
          break;
        }
        case 1: {  // synchronous exit
          if (sessions.empty()) break;
          auto it = std::next(sessions.begin(), static_cast<std::ptrdiff_t>(pick(rng, sessions.size())));
          if (it->second.suspended) break;
          stale.push_back(it->second.thread);
          w.machine.eexit(it->second.thread);
          table.release(it->first);
          sessions.erase(it);
          break;
        }
        case 2: {  // interrupt, then maybe resume
          if (sessions.empty()) break;
          auto it = std::next(sessions.begin(), static_cast<std::ptrdiff_t>(pick(rng, sessions.size())));
          Session& ss = it->second;
          if (!ss.suspended) {
            stale.push_back(ss.thread);
            w.machine.aex(ss.thread);
            ss.suspended = true;
          } else {
            ss.thread = w.machine.eresume(space(ss.pid), it->first);
            ss.suspended = false;
          }
          break;
        }
        case 3: {  // rogue entry on an arbitrary TCS, bypassing the controller
          Pid p = pids[pick(rng, pids.size())];
          Vpn va = tcs_vas[pick(rng, tcs_vas.size())];
          const bool busy = w.machine.tcs(id, va).state == TcsState::kBusy;
          try {
            EnclaveThread t = w.machine.eenter(space(p), va);
            // Hardware admits any process on a free TCS; the rogue leaves at once.
            if (busy) {
              ++r.attacks;
              ++r.undetected;
            }
            w.machine.eexit(t);
            stale.push_back(t);
          } catch (const Error& e) {
            if (busy && e.code() == Errc::kTcsBusy) {
              ++r.attacks;
              ++r.detected;
            } else {
              ++r.false_alarms;
            }
          }
          break;
        }
        case 4: {  // replay a stale handle
          if (stale.empty()) break;
          EnclaveThread t = stale[pick(rng, stale.size())];
          ++r.attacks;
          try {
            if (pick(rng, 2) == 0) {
              w.machine.eexit(t);
            } else {
              w.machine.aex(t);
            }
            ++r.undetected;
          } catch (const Error& e) {
            if (e.code() == Errc::kThreadNotLive) {
              ++r.detected;
            } else {
              ++r.undetected;
            }
          }
          break;
        }
        case 5: {  // resume attempt on a TCS that has nothing saved
          Vpn va = tcs_vas[pick(rng, tcs_vas.size())];
          auto it = sessions.find(va);
          if (it != sessions.end() && it->second.suspended) break;
          ++r.attacks;
          try {
            EnclaveThread t = w.machine.eresume(space(pids[pick(rng, pids.size())]), va);
            ++r.undetected;
            w.machine.eexit(t);
          } catch (const Error&) {
            ++r.detected;
          }
          break;
        }
      }

      // Exclusivity as seen by both hardware and controller.
      for (Vpn va : tcs_vas) {
        const TcsPage& tcs = w.machine.tcs(id, va);
        int live = 0;
        auto it = sessions.find(va);
        if (it != sessions.end() && !it->second.suspended && w.machine.is_live(it->second.thread)) ++live;
        for (const EnclaveThread& t : stale) {
          if (t.tcs_va == va && w.machine.is_live(t)) ++live;
        }
        const bool held = table.holder(va).has_value();
        const bool busy = tcs.state == TcsState::kBusy;
        if (live > 1 || busy != held || held != (it != sessions.end())) ++r.undetected;
      }
    }
  }
  return r;
}

ProbeResult probe_environment_swap(const SecurityConfig& config) {
  ProbeResult r{"environment_swap"};
  std::mt19937_64 rng(config.seed * 104729ULL);
  for (std::size_t trial = 0; trial < config.env_swap_trials; ++trial) {
    World w(small_layout(2));
    Runtime& rt = *w.runtime;
    const InstanceId inst = rt.instance_create(w.a, 1).id;
    const std::string name = "input-" + std::to_string(trial);
    auto trusted = random_bytes(rng, 1 + pick(rng, 3 * kPageSize));
    w.kernel.host_fs_put("tenant-a", name, trusted);
    rt.fs_register(inst, name, trusted);

    auto divergent = trusted;
    switch (pick(rng, 3)) {
      case 0: divergent[pick(rng, divergent.size())] ^= std::byte{static_cast<unsigned char>(1 + pick(rng, 255))}; break;
      case 1: divergent.push_back(std::byte{0}); break;
      default: divergent = random_bytes(rng, 1 + pick(rng, 3 * kPageSize)); break;
    }
    if (divergent == trusted) divergent.push_back(std::byte{1});
    w.kernel.host_fs_put("tenant-evil", name, divergent);

    ++r.trials;
    ++r.attacks;
    w.kernel.adversary_swap_environment(w.a, "tenant-evil");
    try {
      rt.fs_open(inst, name);
      ++r.undetected;
    } catch (const Error& e) {
      if (e.code() == Errc::kIntegrityMismatch) {
        ++r.detected;
      } else {
        ++r.undetected;
      }
    }
    w.kernel.clear_environment_swap(w.a);
    try {
      if (rt.fs_open(inst, name) != trusted) ++r.false_alarms;
    } catch (const Error&) {
      ++r.false_alarms;
    }
  }
  return r;
}

std::vector<ProbeResult> run_security_suite(const SecurityConfig& config) {
  return {probe_remap_exhaustive(), probe_adversary_schedules(config), probe_tcs_exclusivity(config),
          probe_environment_swap(config)};
}

}  // namespace ess

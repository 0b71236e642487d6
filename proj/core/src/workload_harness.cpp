#include "ess/workload_harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <random>
#include <sstream>

#include "ess/enclave_runtime.hpp"
#include "ess/host_kernel.hpp"
#include "ess/sgx_core.hpp"

namespace ess {
namespace {

// Single-threaded simulated clock. Ties run in scheduling order.
class EventLoop {
 public:
  void at(double t, std::function<void()> fn) {
    heap_.push_back(Event{t, seq_++, std::move(fn)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }

  void run() {
    while (!heap_.empty()) {
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      Event e = std::move(heap_.back());
      heap_.pop_back();
      now_ = e.time;
      e.fn();
    }
  }

  double now() const { return now_; }

 private:
  struct Event {
    double time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };

  std::vector<Event> heap_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
};

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11U) * 0x1.0p-53; }

double nearest_rank(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

bool close_to(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max({1.0, std::abs(a), std::abs(b)}); }

void violation(const std::string& what) { throw InvariantViolation(what); }

// Request statistics and the identities every run must satisfy.
void summarize(Metrics& m) {
  const auto& reqs = m.ledger.requests();
  m.request_count = reqs.size();
  m.peak_epc_mib = m.ledger.peak_epc();
  if (reqs.empty()) return;

  std::vector<double> totals;
  totals.reserve(reqs.size());
  double first = reqs.front().arrival_ms;
  double last = reqs.front().finish_ms;
  double sum = 0.0;
  for (const RequestRecord& r : reqs) {
    double latency = r.finish_ms - r.arrival_ms;
    if (!close_to(latency, r.total())) {
      std::ostringstream os;
      os << "request " << r.request_id << ": components sum to " << r.total() << " ms but latency is "
         << latency << " ms";
      violation(os.str());
    }
    totals.push_back(latency);
    sum += latency;
    first = std::min(first, r.arrival_ms);
    last = std::max(last, r.finish_ms);
  }
  std::sort(totals.begin(), totals.end());
  m.mean_latency_ms = sum / static_cast<double>(totals.size());
  m.p50_ms = nearest_rank(totals, 0.50);
  m.p95_ms = nearest_rank(totals, 0.95);
  m.p99_ms = nearest_rank(totals, 0.99);
  m.completion_time_ms = last - first;
  m.throughput_rps = m.completion_time_ms > 0.0
                         ? static_cast<double>(m.request_count) / (m.completion_time_ms / 1000.0)
                         : 0.0;
}

// --- serverless ------------------------------------------------------------

constexpr std::uint64_t kSymbolicInstancePages = 2;
constexpr std::uint64_t kCcEnclavePages = 4;
constexpr Vpn kCcEnclaveBase{0x1000};

struct Phase {
  Component component;
  double ms;
  bool locked;
  std::function<void()> on_start;
};

class ServerlessSim {
 public:
  ServerlessSim(const ExecutionModel& model, const RequestTrace& trace, const CostParams& params,
                std::size_t workers)
      : model_(model), trace_(trace), p_(params), workers_(workers), free_workers_(workers) {}

  Metrics run() {
    if (workers_ == 0) throw Error(Errc::kInvalidArgument, "workers must be >= 1");
    p_.validate();
    for (std::size_t i = 1; i < trace_.arrivals.size(); ++i) {
      if (trace_.arrivals[i].time_ms < trace_.arrivals[i - 1].time_ms) {
        throw Error(Errc::kInvalidArgument, "trace not sorted");
      }
    }
    for (const Arrival& a : trace_.arrivals) p_.exec_ms(a.workload);

    setup();
    reqs_.resize(trace_.arrivals.size());
    for (std::size_t i = 0; i < trace_.arrivals.size(); ++i) {
      loop_.at(trace_.arrivals[i].time_ms, [this, i] { arrive(i); });
    }
    loop_.run();
    check_end_state();
    summarize(metrics_);
    return std::move(metrics_);
  }

 private:
  struct Env {
    Pid pid{};
    EnclaveId enclave{};
    bool alive = false;
    bool busy = false;
    double idle_since = 0.0;
    std::optional<EnclaveThread> thread;
  };

  struct Req {
    std::size_t ledger = 0;
    std::vector<Phase> phases;
    std::size_t next = 0;
    double wait_since = 0.0;
    Pid pid{};
    bool own_container = false;
    std::optional<Vpn> tcs;
    std::optional<InstanceId> instance;
    std::optional<std::size_t> env;
  };

  CostLedger& ledger() { return metrics_.ledger; }
  double now() const { return loop_.now(); }
  bool serialized() const { return p_.epc_alloc_serialized; }
  std::string fs_root(std::size_t i) const { return "fn/" + trace_.arrivals[i].workload; }

  void setup() {
    switch (model_.variant) {
      case ModelKind::kTeeMate: {
        Container& c = kernel_.create_container("runtime", 0.0);
        initial_pid_ = c.pid;
        RuntimeLayout layout;
        layout.tcs_count = workers_;
        layout.instance_slots = workers_;
        layout.instance_region_pages = kSymbolicInstancePages;
        EnclaveId id{next_enclave_++};
        machine_.ecreate(runtime_enclave_config(id, layout));
        runtime_.emplace(kernel_, id, initial_pid_, layout);
        runtime_->runtime_init(0);
        metrics_.setup_ms = p_.t_container_create + p_.t_enclave_create + p_.t_instance_load_cold;
        metrics_.baseline_epc_mib = p_.m_teemate_base - p_.m_teemate_per_instance;
        ledger().occupy(0.0, metrics_.baseline_epc_mib);
        break;
      }
      case ModelKind::kCcWarm:
        if (model_.predict) {
          for (std::size_t w = 0; w < workers_; ++w) {
            build_env(kernel_.create_container("fn/predicted", 0.0).pid, 0.0);
          }
          metrics_.setup_ms = p_.t_container_create + p_.t_enclave_create + p_.t_instance_load_cold;
          metrics_.baseline_epc_mib = static_cast<double>(workers_) * p_.m_strawman_per_request;
        }
        break;
      case ModelKind::kNative:
      case ModelKind::kCcCold:
        break;
    }
  }

  // Container plus a small initialized enclave. Charges its EPC footprint.
  std::size_t build_env(Pid pid, double t) {
    Container& c = kernel_.container(pid);
    EnclaveId id{next_enclave_++};
    machine_.ecreate(EnclaveConfig{id, kCcEnclaveBase, kCcEnclavePages});
    kernel_.add_enclave_page(c.pid, id, kCcEnclaveBase, {}, PageType::kTcs, kCcEnclaveBase.value + 1);
    for (std::uint64_t i = 1; i < kCcEnclavePages; ++i) {
      kernel_.add_enclave_page(c.pid, id, kCcEnclaveBase + i, {}, PageType::kRegular);
    }
    machine_.einit(id);
    ledger().occupy(t, p_.m_strawman_per_request);
    envs_.push_back(Env{c.pid, id, true, false, t, std::nullopt});
    return envs_.size() - 1;
  }

  void teardown_env(std::size_t e, double t) {
    Env& env = envs_[e];
    for (std::uint64_t i = 0; i < kCcEnclavePages; ++i) kernel_.remove_enclave_page(env.enclave, kCcEnclaveBase + i);
    kernel_.destroy_container(env.pid);
    env.alive = false;
    ledger().occupy(t, -p_.m_strawman_per_request);
  }

  void enter_env(std::size_t e) {
    Env& env = envs_[e];
    env.busy = true;
    env.thread = machine_.eenter(kernel_.container(env.pid).address_space, kCcEnclaveBase);
  }

  void arrive(std::size_t i) {
    reqs_[i].ledger = ledger().open_request(i, trace_.arrivals[i].time_ms);
    reqs_[i].wait_since = now();
    waiting_.push_back(i);
    dispatch();
  }

  void dispatch() {
    while (free_workers_ > 0 && !waiting_.empty()) {
      std::size_t i = waiting_.front();
      waiting_.pop_front();
      --free_workers_;
      ledger().charge(reqs_[i].ledger, Component::kQueueWait, now() - reqs_[i].wait_since);
      plan(i);
      start_next(i);
    }
  }

  void plan(std::size_t i) {
    Req& r = reqs_[i];
    const double exec = p_.exec_ms(trace_.arrivals[i].workload);
    auto fresh_container = [this, i] {
      Req& rr = reqs_[i];
      rr.pid = kernel_.create_container(fs_root(i), now()).pid;
      rr.own_container = true;
    };

    switch (model_.variant) {
      case ModelKind::kNative:
        r.phases = {
            {Component::kContainerCreate, p_.t_container_create, false, fresh_container},
            {Component::kInstanceLoad, p_.t_instance_load_cold, false, {}},
            {Component::kExec, exec, false, {}},
        };
        return;

      case ModelKind::kCcWarm:
        if (auto e = find_warm_env()) {
          r.env = *e;
          r.phases = {{Component::kExec, exec, false, [this, e] { enter_env(*e); }}};
          return;
        }
        [[fallthrough]];
      case ModelKind::kCcCold: {
        const double locked = p_.t_enclave_epc_locked;
        r.phases = {
            {Component::kContainerCreate, p_.t_container_create, false,
             [this, i] { reqs_[i].pid = kernel_.create_container(fs_root(i), now()).pid; }},
            {Component::kEnclaveCreate, locked, true,
             [this, i] {
               std::size_t e = build_env(reqs_[i].pid, now());
               reqs_[i].env = e;
               envs_[e].busy = true;
             }},
            {Component::kEnclaveCreate, p_.t_enclave_create - locked, false, {}},
            {Component::kInstanceLoad, p_.t_instance_load_cold, false, {}},
            {Component::kExec, exec, false, [this, i] { enter_env(*reqs_[i].env); }},
        };
        return;
      }

      case ModelKind::kTeeMate: {
        bool reuse = model_.reuse_initial_container && !initial_busy_;
        if (reuse) {
          initial_busy_ = true;
          r.pid = initial_pid_;
        } else {
          r.phases.push_back({Component::kContainerCreate, p_.t_container_create, false, fresh_container});
        }
        r.phases.push_back({Component::kAlias, p_.t_alias, false, [this, i, reuse] {
                              if (!reuse) runtime_->alias_into(kernel_.container(reqs_[i].pid));
                            }});
        r.phases.push_back({Component::kTcsAcquire, p_.t_tcs_op, false,
                            [this, i] { reqs_[i].tcs = runtime_->enter(reqs_[i].pid); }});
        r.phases.push_back({Component::kEpcExpand, p_.epc_expand_ms(), true, [this, i] {
                              reqs_[i].instance =
                                  runtime_->instance_create(reqs_[i].pid, kSymbolicInstancePages).id;
                              ledger().occupy(now(), p_.m_teemate_per_instance);
                            }});
        r.phases.push_back({Component::kInstanceLoad, p_.t_instance_load_teemate, false,
                            [this, i] { runtime_->instance_start(*reqs_[i].instance); }});
        r.phases.push_back({Component::kExec, exec, false, {}});
        return;
      }
    }
  }

  std::optional<std::size_t> find_warm_env() {
    const double keep_ms = model_.warm_keepalive_s * 1000.0;
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      const Env& env = envs_[e];
      if (env.alive && !env.busy && (model_.predict || now() - env.idle_since <= keep_ms)) return e;
    }
    return std::nullopt;
  }

  void start_next(std::size_t i) {
    Req& r = reqs_[i];
    if (r.next == r.phases.size()) {
      finish(i);
      return;
    }
    const Phase& ph = r.phases[r.next];
    if (ph.locked && serialized()) {
      if (lock_busy_) {
        r.wait_since = now();
        lock_queue_.push_back(i);
        return;
      }
      lock_busy_ = true;
    }
    begin(i);
  }

  void begin(std::size_t i) {
    Req& r = reqs_[i];
    const Phase& ph = r.phases[r.next];
    if (ph.on_start) ph.on_start();
    const double start = now();
    loop_.at(start + ph.ms, [this, i, start] { end(i, start); });
  }

  void end(std::size_t i, double start) {
    Req& r = reqs_[i];
    const Phase& ph = r.phases[r.next];
    ledger().charge(r.ledger, ph.component, ph.ms);
    if (ph.locked) {
      locked_intervals_.emplace_back(start, now());
      if (serialized()) {
        lock_busy_ = false;
        if (!lock_queue_.empty()) {
          std::size_t j = lock_queue_.front();
          lock_queue_.pop_front();
          ledger().charge(reqs_[j].ledger, Component::kEpcLockWait, now() - reqs_[j].wait_since);
          lock_busy_ = true;
          begin(j);
        }
      }
    }
    ++r.next;
    start_next(i);
  }

  void finish(std::size_t i) {
    Req& r = reqs_[i];
    const double t = now();
    switch (model_.variant) {
      case ModelKind::kNative:
        kernel_.destroy_container(r.pid);
        break;
      case ModelKind::kCcCold: {
        Env& env = envs_[*r.env];
        machine_.eexit(*env.thread);
        teardown_env(*r.env, t);
        break;
      }
      case ModelKind::kCcWarm: {
        std::size_t e = *r.env;
        Env& env = envs_[e];
        machine_.eexit(*env.thread);
        env.thread.reset();
        env.busy = false;
        env.idle_since = t;
        if (!model_.predict) {
          loop_.at(t + model_.warm_keepalive_s * 1000.0, [this, e, t] {
            if (envs_[e].alive && !envs_[e].busy && envs_[e].idle_since == t) teardown_env(e, now());
          });
        }
        break;
      }
      case ModelKind::kTeeMate:
        runtime_->instance_finish(*r.instance);
        runtime_->instance_destroy(*r.instance);
        runtime_->leave(*r.tcs);
        ledger().occupy(t, -p_.m_teemate_per_instance);
        if (r.own_container) {
          kernel_.destroy_container(r.pid);
        } else {
          initial_busy_ = false;
        }
        break;
    }
    ledger().close_request(r.ledger, t);
    ++free_workers_;
    dispatch();
  }

  void check_end_state() {
    if (!close_to(ledger().occupancy(), metrics_.baseline_epc_mib)) {
      std::ostringstream os;
      os << "EPC occupancy " << ledger().occupancy() << " MiB after drain, expected "
         << metrics_.baseline_epc_mib;
      violation(os.str());
    }
    if (serialized()) {
      std::sort(locked_intervals_.begin(), locked_intervals_.end());
      for (std::size_t k = 1; k < locked_intervals_.size(); ++k) {
        if (locked_intervals_[k].first < locked_intervals_[k - 1].second - 1e-9) {
          violation("EPC allocation intervals overlap");
        }
      }
    }
    if (model_.variant == ModelKind::kTeeMate) {
      if (runtime_->live_instances() != 0) violation("function instances leaked");
      if (!runtime_->tcs_table().all_available()) violation("TCS rows still held");
      for (const RequestRecord& r : ledger().requests()) {
        if (r.component(Component::kEnclaveCreate) != 0.0) violation("TEEMATE request created an enclave");
      }
    }
    std::size_t expected_containers = model_.variant == ModelKind::kTeeMate ? 1 : 0;
    if (model_.variant == ModelKind::kCcWarm && model_.predict) expected_containers = workers_;
    if (kernel_.container_count() != expected_containers) violation("containers leaked");
  }

  ExecutionModel model_;
  const RequestTrace& trace_;
  CostParams p_;
  std::size_t workers_;
  std::size_t free_workers_;

  Machine machine_;
  Kernel kernel_{machine_};
  std::optional<Runtime> runtime_;
  Pid initial_pid_{};
  bool initial_busy_ = false;
  std::uint64_t next_enclave_ = 1;
  std::vector<Env> envs_;

  EventLoop loop_;
  Metrics metrics_;
  std::vector<Req> reqs_;
  std::deque<std::size_t> waiting_;
  bool lock_busy_ = false;
  std::deque<std::size_t> lock_queue_;
  std::vector<std::pair<double, double>> locked_intervals_;
};

// --- database ----------------------------------------------------------------

constexpr Vpn kChildBase{0x1000};

class DatabaseSim {
 public:
  DatabaseSim(const DatabaseConfig& cfg, const CostParams& params) : cfg_(cfg), p_(params) {}

  Metrics run() {
    p_.validate();
    if (!(cfg_.db_mib > 0.0)) throw Error(Errc::kInvalidArgument, "db_mib must be > 0");
    if (cfg_.write_ratio < 0.0 || cfg_.write_ratio > 1.0) {
      throw Error(Errc::kInvalidArgument, "write_ratio must lie in [0, 1]");
    }
    if (!(cfg_.snapshot_interval_s > 0.0) || cfg_.duration_s < 0.0) {
      throw Error(Errc::kInvalidArgument, "snapshot_interval_s must be > 0");
    }
    db_pages_ = static_cast<std::uint64_t>(std::llround(cfg_.db_mib / p_.page_mib));
    if (db_pages_ == 0) throw Error(Errc::kInvalidArgument, "database smaller than a page");

    setup();
    generate();
    loop_.run();
    finish();
    return std::move(metrics_);
  }

 private:
  struct Job {
    bool fork = false;
    std::size_t index = 0;
  };
  struct Req {
    double arrival = 0.0;
    std::uint64_t key = 0;
    bool write = false;
    std::optional<std::size_t> burst;
    std::size_t ledger = 0;
  };

  CostLedger& ledger() { return metrics_.ledger; }
  double now() const { return loop_.now(); }
  bool teemate() const { return cfg_.model == DbModel::kTeeMate; }
  double db_copy_mib() const { return p_.m_db_runtime_base + cfg_.db_mib; }

  void setup() {
    parent_pid_ = kernel_.create_container("db", 0.0).pid;
    RuntimeLayout layout;
    layout.tcs_count = 2;
    layout.runtime_pages = 8;
    layout.instance_slots = 0;
    // Originals plus room for one privatization per page.
    layout.data_pool_pages = 2 * db_pages_;
    EnclaveId id{1};
    machine_.ecreate(runtime_enclave_config(id, layout));
    runtime_.emplace(kernel_, id, parent_pid_, layout);
    runtime_->runtime_init(0);
    runtime_->enter(parent_pid_);
    runtime_->create_data_extent(parent_pid_, db_pages_);

    double base = db_copy_mib();
    if (teemate()) base += p_.db_translation_overhead * cfg_.db_mib;
    metrics_.baseline_epc_mib = base;
    ledger().occupy(0.0, base);
    stats_.db_mib = cfg_.db_mib;
    stats_.baseline_mib = base;
  }

  void generate() {
    std::mt19937_64 rng(cfg_.seed);
    std::vector<Req> all;
    const double duration_ms = cfg_.duration_s * 1000.0;
    const double interval_ms = cfg_.snapshot_interval_s * 1000.0;

    std::vector<double> snaps;
    for (double t = interval_ms; t <= duration_ms + 1e-9; t += interval_ms) snaps.push_back(t);
    std::vector<double> background;
    if (cfg_.background_rate_per_s > 0.0) {
      for (const Arrival& a : gen_poisson(cfg_.background_rate_per_s, cfg_.duration_s, rng(), "db").arrivals) {
        background.push_back(a.time_ms);
      }
    }

    // Merge bursts and background by time; at a tie the burst goes first.
    std::size_t b = 0;
    for (std::size_t k = 0; k <= snaps.size(); ++k) {
      const double limit = k < snaps.size() ? snaps[k] : duration_ms + 1.0;
      for (; b < background.size() && background[b] < limit; ++b) all.push_back(make_req(rng, background[b], std::nullopt));
      if (k < snaps.size()) {
        for (std::size_t n = 0; n < cfg_.burst_requests; ++n) all.push_back(make_req(rng, snaps[k], k));
      }
    }
    reqs_ = std::move(all);
    stats_.snapshots.resize(snaps.size());

    for (std::size_t k = 0; k < snaps.size(); ++k) {
      stats_.snapshots[k].start_ms = snaps[k];
      loop_.at(snaps[k], [this, k] { request_snapshot(k); });
    }
    for (std::size_t i = 0; i < reqs_.size(); ++i) {
      loop_.at(reqs_[i].arrival, [this, i] { arrive(i); });
    }
  }

  Req make_req(std::mt19937_64& rng, double t, std::optional<std::size_t> burst) {
    Req r;
    r.arrival = t;
    r.key = rng() % db_pages_;
    r.write = uniform01(rng) < cfg_.write_ratio;
    r.burst = burst;
    return r;
  }

  void request_snapshot(std::size_t k) {
    if (child_live_ || fork_queued_) {
      deferred_.push_back(k);
      return;
    }
    fork_queued_ = true;
    queue_.push_back(Job{true, k});
    serve();
  }

  void arrive(std::size_t i) {
    reqs_[i].ledger = ledger().open_request(i, reqs_[i].arrival);
    queue_.push_back(Job{false, i});
    serve();
  }

  void serve() {
    if (server_busy_ || queue_.empty()) return;
    Job job = queue_.front();
    queue_.pop_front();
    server_busy_ = true;
    if (job.fork) {
      start_fork(job.index);
    } else {
      start_request(job.index);
    }
  }

  void start_request(std::size_t i) {
    Req& r = reqs_[i];
    ledger().charge(r.ledger, Component::kQueueWait, now() - r.arrival);
    double cow = 0.0;
    if (r.write) {
      std::array<std::byte, 8> value{};
      for (int b = 0; b < 8; ++b) value[b] = static_cast<std::byte>((i >> (8 * b)) & 0xffU);
      const std::size_t offset = (i % (kPageSize / 8)) * 8;
      if (pair_ && pair_->live) {
        std::uint64_t before = pair_->dirty_count;
        runtime_->cow_write(*pair_, parent_pid_, r.key, offset, value);
        if (pair_->dirty_count != before) {
          cow = p_.t_epc_alloc_per_page + p_.t_page_copy;
          ledger().occupy(now(), p_.page_mib);
        }
      } else {
        runtime_->data_write(parent_pid_, r.key, offset, value);
      }
    } else {
      runtime_->data_read(parent_pid_, r.key);
    }
    ledger().charge(r.ledger, Component::kCowCopy, cow);
    ledger().charge(r.ledger, Component::kService, p_.t_db_request);
    loop_.at(now() + p_.t_db_request + cow, [this, i] {
      ledger().close_request(reqs_[i].ledger, now());
      if (auto k = reqs_[i].burst) {
        stats_.snapshots[*k].window_end_ms = std::max(stats_.snapshots[*k].window_end_ms, now());
        ++stats_.snapshots[*k].window_requests;
      }
      server_busy_ = false;
      serve();
    });
  }

  void start_fork(std::size_t k) {
    fork_queued_ = false;
    child_live_ = true;
    SnapshotStats& s = stats_.snapshots[k];
    s.start_ms = std::min(s.start_ms, now());
    fork_digest_ = runtime_->data_digest(parent_pid_);
    epc_before_fork_ = machine_.epc_used_pages();

    double fork_ms = 0.0;
    if (teemate()) {
      pair_ = runtime_->fork_cow(parent_pid_, now());
      ledger().occupy(now(), p_.m_db_thread);
      fork_ms = p_.t_fork_teemate();
    } else {
      strawman_copy();
      ledger().occupy(now(), db_copy_mib());
      fork_ms = p_.t_fork_strawman(cfg_.db_mib);
    }
    s.fork_ms = fork_ms;
    loop_.at(now() + fork_ms, [this, k] {
      server_busy_ = false;
      const double snap_ms = cfg_.db_mib * p_.t_snapshot_per_mib;
      loop_.at(now() + snap_ms, [this, k] { end_snapshot(k); });
      serve();
    });
  }

  // A separate enclave receives a copy of every parent data page.
  void strawman_copy() {
    Container& child = kernel_.create_container("db", now());
    child_pid_ = child.pid;
    child_enclave_ = EnclaveId{next_child_enclave_++};
    machine_.ecreate(EnclaveConfig{child_enclave_, kChildBase, db_pages_});
    for (std::uint64_t i = 0; i < db_pages_; ++i) {
      Ppn pa = runtime_->data_page(parent_pid_, i);
      PageBytes content = machine_.is_lazy_zero(pa) ? PageBytes{} : machine_.page_bytes(pa);
      kernel_.add_enclave_page(child_pid_, child_enclave_, kChildBase + i, content, PageType::kRegular);
    }
    machine_.einit(child_enclave_);
  }

  Digest strawman_child_digest() const {
    const AddressSpace& space = kernel_.container(child_pid_).address_space;
    Measurement m;
    for (std::uint64_t i = 0; i < db_pages_; ++i) {
      Translation t = machine_.translate(space, kChildBase + i, Access::kRead, CpuMode::enclave_mode(child_enclave_));
      if (!t.ok()) violation("strawman child lost page " + std::to_string(i));
      if (machine_.is_lazy_zero(t.pa())) {
        m.extend(Vpn{i}, PageType::kRegular, {});
      } else {
        m.extend(Vpn{i}, PageType::kRegular, machine_.page_bytes(t.pa()));
      }
    }
    return m.digest();
  }

  void end_snapshot(std::size_t k) {
    SnapshotStats& s = stats_.snapshots[k];
    s.child_end_ms = now();
    if (teemate()) {
      s.cow_pages = pair_->dirty_count;
      s.digest = runtime_->snapshot(*pair_, pair_->child_pid);
      ledger().occupy(now(), -(p_.m_db_thread + p_.page_mib * static_cast<double>(pair_->dirty_count)));
      pair_.reset();
    } else {
      s.digest = strawman_child_digest();
      for (std::uint64_t i = 0; i < db_pages_; ++i) kernel_.remove_enclave_page(child_enclave_, kChildBase + i);
      kernel_.destroy_container(child_pid_);
      ledger().occupy(now(), -db_copy_mib());
    }
    if (s.digest != fork_digest_) violation("snapshot " + std::to_string(k) + " does not match fork-time state");
    if (machine_.epc_used_pages() != epc_before_fork_) violation("snapshot left EPC pages behind");
    child_live_ = false;

    if (!deferred_.empty()) {
      std::size_t next = deferred_.front();
      deferred_.pop_front();
      fork_queued_ = true;
      queue_.push_back(Job{true, next});
      serve();
    }
  }

  void finish() {
    if (!close_to(ledger().occupancy(), metrics_.baseline_epc_mib)) violation("EPC occupancy did not return to baseline");
    double fork_sum = 0.0;
    double tput_sum = 0.0;
    for (SnapshotStats& s : stats_.snapshots) {
      const double window = s.window_end_ms - s.start_ms;
      s.window_throughput_rps = window > 0.0 ? static_cast<double>(s.window_requests) / (window / 1000.0) : 0.0;
      fork_sum += s.fork_ms;
      tput_sum += s.window_throughput_rps;
    }
    if (!stats_.snapshots.empty()) {
      const auto n = static_cast<double>(stats_.snapshots.size());
      stats_.mean_fork_ms = fork_sum / n;
      stats_.mean_window_throughput_rps = tput_sum / n;
    }
    summarize(metrics_);
    metrics_.db = std::move(stats_);
  }

  DatabaseConfig cfg_;
  CostParams p_;
  std::uint64_t db_pages_ = 0;

  Machine machine_;
  Kernel kernel_{machine_};
  std::optional<Runtime> runtime_;
  Pid parent_pid_{};
  Pid child_pid_{};
  EnclaveId child_enclave_{};
  std::uint64_t next_child_enclave_ = 2;
  std::optional<ForkPair> pair_;
  Digest fork_digest_;
  std::uint64_t epc_before_fork_ = 0;

  EventLoop loop_;
  Metrics metrics_;
  DatabaseStats stats_;
  std::vector<Req> reqs_;
  std::deque<Job> queue_;
  std::deque<std::size_t> deferred_;
  bool server_busy_ = false;
  bool child_live_ = false;
  bool fork_queued_ = false;
};

}  // namespace

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::kNative: return "native";
    case ModelKind::kCcCold: return "cc_cold";
    case ModelKind::kCcWarm: return "cc_warm";
    case ModelKind::kTeeMate: return "teemate";
  }
  return "unknown";
}

ModelKind parse_model(std::string_view name) {
  for (ModelKind m : {ModelKind::kNative, ModelKind::kCcCold, ModelKind::kCcWarm, ModelKind::kTeeMate}) {
    if (to_string(m) == name) return m;
  }
  throw Error(Errc::kNotFound, "unknown model " + std::string(name));
}

std::string_view to_string(DbModel m) { return m == DbModel::kStrawman ? "strawman" : "teemate"; }

DbModel parse_db_model(std::string_view name) {
  if (name == "strawman") return DbModel::kStrawman;
  if (name == "teemate") return DbModel::kTeeMate;
  throw Error(Errc::kNotFound, "unknown database model " + std::string(name));
}

RequestTrace gen_burst(std::size_t n, const std::string& workload) {
  if (n == 0) throw Error(Errc::kInvalidArgument, "burst needs at least one request");
  RequestTrace t;
  t.arrivals.assign(n, Arrival{0.0, workload});
  return t;
}

RequestTrace gen_poisson(double rate_per_s, double duration_s, std::uint64_t seed,
                         const std::string& workload) {
  if (!(rate_per_s > 0.0)) throw Error(Errc::kInvalidArgument, "rate must be > 0");
  RequestTrace trace;
  trace.seed = seed;
  std::mt19937_64 rng(seed);
  const double rate_per_ms = rate_per_s / 1000.0;
  const double end = duration_s * 1000.0;
  double t = 0.0;
  while (true) {
    t += -std::log1p(-uniform01(rng)) / rate_per_ms;
    if (t > end) break;
    trace.arrivals.push_back(Arrival{t, workload});
  }
  return trace;
}

Metrics run_serverless(const ExecutionModel& model, const RequestTrace& trace,
                       const CostParams& params, std::size_t workers) {
  return ServerlessSim(model, trace, params, workers).run();
}

Metrics run_database(const DatabaseConfig& config, const CostParams& params) {
  return DatabaseSim(config, params).run();
}

}  // namespace ess

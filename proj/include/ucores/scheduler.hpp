#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ucores/errors.hpp"
#include "ucores/task.hpp"
#include "ucores/wire.hpp"

namespace ucores {

/// Core-aware FIFO scheduling state. Pure bookkeeping: transports feed it
/// registrations, heartbeats and completions and drain assignments from it.
///
/// Tasks are assigned in FIFO order to workers with free capacity
/// (in-flight < cores), lowest worker_id first among the free ones.
class Scheduler {
 public:
  struct PendingTask {
    Task task;
    int attempt = 0;
  };

  struct Assignment {
    std::string worker_id;
    Task task;
    int attempt = 0;
  };

  struct CompletionInfo {
    bool accepted = false;  // false: duplicate or stale, discard the payload
    int attempt = 0;
    Task task;  // the settled task, for retry decisions
  };

  void add_worker(const WorkerCapabilities& caps, std::uint64_t now_ms) {
    WorkerState st;
    st.caps = caps;
    st.last_seen_ms = now_ms;
    workers_[caps.worker_id] = std::move(st);
  }

  bool has_worker(const std::string& id) const { return workers_.count(id) != 0; }

  std::size_t alive_workers() const { return workers_.size(); }

  /// Removes a worker (declared dead or disconnected) and hands back its
  /// in-flight tasks in assignment order for the caller to requeue.
  std::vector<PendingTask> remove_worker(const std::string& id) {
    auto it = workers_.find(id);
    if (it == workers_.end()) return {};
    std::vector<PendingTask> orphaned;
    for (const TicketKey& key : it->second.in_flight_order) {
      auto tk = in_flight_.find(key);
      if (tk != in_flight_.end()) {
        orphaned.push_back(PendingTask{std::move(tk->second.task), tk->second.attempt});
        in_flight_.erase(tk);
      }
    }
    workers_.erase(it);
    return orphaned;
  }

  void enqueue_back(Task task, int attempt = 0) {
    pending_.push_back(PendingTask{std::move(task), attempt});
  }

  void enqueue_front(Task task, int attempt) {
    pending_.push_front(PendingTask{std::move(task), attempt});
  }

  /// Drops queued (not in-flight) tasks of one job.
  void purge_pending(std::uint64_t job_id) {
    std::deque<PendingTask> keep;
    for (auto& p : pending_) {
      if (p.task.job_id != job_id) keep.push_back(std::move(p));
    }
    pending_.swap(keep);
  }

  /// Drains every assignment currently possible.
  std::vector<Assignment> take_assignments() {
    std::vector<Assignment> out;
    while (!pending_.empty()) {
      WorkerState* chosen = nullptr;
      std::string chosen_id;
      for (auto& [id, st] : workers_) {  // map order = lowest id first
        if (st.in_flight_order.size() < st.caps.cores) {
          chosen = &st;
          chosen_id = id;
          break;
        }
      }
      if (!chosen) break;
      PendingTask p = std::move(pending_.front());
      pending_.pop_front();
      const TicketKey key{p.task.job_id, p.task.task_id};
      chosen->in_flight_order.push_back(key);
      chosen->max_in_flight =
          std::max(chosen->max_in_flight, chosen->in_flight_order.size());
      in_flight_[key] = InFlight{p.task, p.attempt, chosen_id};
      out.push_back(Assignment{chosen_id, std::move(p.task), p.attempt});
    }
    return out;
  }

  /// Settles one completion (result or error). Frees the worker's slot only
  /// when the task is currently assigned to that worker; anything else is a
  /// duplicate or a stale reply from a worker wrongly declared dead.
  CompletionInfo on_task_done(std::uint64_t job_id, std::uint64_t task_id,
                              const std::string& worker_id) {
    const TicketKey key{job_id, task_id};
    auto it = in_flight_.find(key);
    if (it == in_flight_.end() || it->second.worker_id != worker_id) return {};
    CompletionInfo info{true, it->second.attempt, std::move(it->second.task)};
    auto w = workers_.find(worker_id);
    if (w != workers_.end()) {
      auto& order = w->second.in_flight_order;
      for (auto o = order.begin(); o != order.end(); ++o) {
        if (*o == key) {
          order.erase(o);
          break;
        }
      }
    }
    in_flight_.erase(it);
    return info;
  }

  void heartbeat(const std::string& worker_id, std::uint64_t now_ms) {
    auto it = workers_.find(worker_id);
    if (it != workers_.end()) it->second.last_seen_ms = now_ms;
  }

  /// Workers that have missed `misses` consecutive heartbeat intervals.
  std::vector<std::string> timed_out(std::uint64_t now_ms, std::uint64_t interval_ms,
                                     int misses) const {
    std::vector<std::string> out;
    for (const auto& [id, st] : workers_) {
      if (now_ms >= st.last_seen_ms + interval_ms * static_cast<std::uint64_t>(misses)) {
        out.push_back(id);
      }
    }
    return out;
  }

  std::size_t pending_count() const { return pending_.size(); }
  std::size_t in_flight_count() const { return in_flight_.size(); }

  std::size_t in_flight(const std::string& worker_id) const {
    auto it = workers_.find(worker_id);
    return it == workers_.end() ? 0 : it->second.in_flight_order.size();
  }

  std::size_t max_in_flight_observed(const std::string& worker_id) const {
    auto it = workers_.find(worker_id);
    return it == workers_.end() ? 0 : it->second.max_in_flight;
  }

  std::vector<std::string> worker_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, st] : workers_) out.push_back(id);
    return out;
  }

  const WorkerCapabilities* capabilities(const std::string& id) const {
    auto it = workers_.find(id);
    return it == workers_.end() ? nullptr : &it->second.caps;
  }

 private:
  using TicketKey = std::pair<std::uint64_t, std::uint64_t>;  // (job_id, task_id)

  struct InFlight {
    Task task;
    int attempt = 0;
    std::string worker_id;
  };

  struct WorkerState {
    WorkerCapabilities caps;
    std::uint64_t last_seen_ms = 0;
    std::vector<TicketKey> in_flight_order;
    std::size_t max_in_flight = 0;
  };

  std::deque<PendingTask> pending_;
  std::map<std::string, WorkerState> workers_;  // sorted: lowest id wins ties
  std::map<TicketKey, InFlight> in_flight_;
};

namespace detail {

/// Bookkeeping for one wave of independent tasks; shared by the in-process
/// and TCP drivers. The owner provides locking.
struct WaveState {
  std::uint64_t job_id = 0;
  int max_retries = 2;
  std::set<std::uint64_t> expected;
  std::map<std::uint64_t, TaskResult> done;
  std::optional<std::string> failure;

  bool finished() const { return failure.has_value() || done.size() == expected.size(); }
};

class DriverCore {
 public:
  Scheduler scheduler;

  std::uint64_t allocate_job_id() { return ++next_job_id_; }

  void open_job_log(const std::string& path) {
    job_log_.open(path, std::ios::trunc);
    if (!job_log_) throw IoError("cannot open job log: " + path);
  }

  WaveState& start_wave(std::uint64_t job_id, std::vector<Task>& tasks, int max_retries) {
    WaveState& wave = waves_[job_id];
    wave.job_id = job_id;
    wave.max_retries = max_retries;
    for (Task& t : tasks) {
      wave.expected.insert(t.task_id);
      scheduler.enqueue_back(std::move(t), 0);
    }
    return wave;
  }

  WaveState* wave(std::uint64_t job_id) {
    auto it = waves_.find(job_id);
    return it == waves_.end() ? nullptr : &it->second;
  }

  void handle_result(const TaskResultMsg& msg) {
    const TaskResult& r = msg.result;
    auto done = scheduler.on_task_done(r.job_id, r.task_id, r.worker_id);
    if (!done.accepted) return;  // duplicate or stale: discard by task_id
    WaveState* w = wave(r.job_id);
    if (!w || w->done.count(r.task_id) || !w->expected.count(r.task_id)) return;
    w->done.emplace(r.task_id, r);
    log_result(r, done.attempt);
  }

  void handle_error(const TaskErrorMsg& msg, const std::string& worker_id) {
    auto done = scheduler.on_task_done(msg.job_id, msg.task_id, worker_id);
    if (!done.accepted) return;
    WaveState* w = wave(msg.job_id);
    if (!w) return;
    requeue_or_fail(*w, done.task, done.attempt, "phase " + msg.phase + ": " + msg.detail);
  }

  /// Declares a worker dead; its in-flight tasks go back to the front of
  /// the FIFO with their retry count incremented.
  void handle_worker_dead(const std::string& worker_id) {
    std::vector<Scheduler::PendingTask> orphaned = scheduler.remove_worker(worker_id);
    for (auto it = orphaned.rbegin(); it != orphaned.rend(); ++it) {
      WaveState* w = wave(it->task.job_id);
      if (!w) continue;
      requeue_or_fail(*w, it->task, it->attempt, "worker " + worker_id + " lost", true);
    }
  }

  std::vector<TaskResult> finish_wave(std::uint64_t job_id) {
    auto it = waves_.find(job_id);
    std::vector<TaskResult> out;
    if (it == waves_.end()) return out;
    std::optional<std::string> failure = it->second.failure;
    out.reserve(it->second.done.size());
    for (auto& [id, r] : it->second.done) out.push_back(std::move(r));  // sorted by task_id
    waves_.erase(it);
    if (failure) {
      scheduler.purge_pending(job_id);
      throw JobFailed(*failure);
    }
    return out;
  }

 private:
  void requeue_or_fail(WaveState& w, const Task& task, int attempt, const std::string& why,
                       bool front = true) {
    if (attempt + 1 > w.max_retries) {
      if (!w.failure) {
        w.failure = "task " + std::to_string(task.task_id) + " of job " +
                    std::to_string(task.job_id) + " failed after " +
                    std::to_string(attempt + 1) + " attempts (" + why + ")";
      }
      return;
    }
    if (front) scheduler.enqueue_front(task, attempt + 1);
    else scheduler.enqueue_back(task, attempt + 1);
  }

  void log_result(const TaskResult& r, int attempt) {
    if (!job_log_.is_open()) return;
    nlohmann::json line{{"job", r.job_id},
                        {"task", r.task_id},
                        {"worker", r.worker_id},
                        {"executor", r.metrics.executor_kind},
                        {"items", r.metrics.items},
                        {"bytes", r.metrics.bytes_moved},
                        {"sim_ns", r.metrics.simulated_ns},
                        {"dev_inv", r.metrics.device_invocations},
                        {"attempt", attempt},
                        {"ts", timestamp_ms_()}};
    job_log_ << line.dump() << "\n";
    job_log_.flush();
  }

 public:
  /// Timestamp source for log lines; virtual-time drivers substitute their
  /// own clock so logs stay deterministic.
  std::function<std::uint64_t()> timestamp_ms_ = [] {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
  };

 private:
  std::uint64_t next_job_id_ = 0;
  std::unordered_map<std::uint64_t, WaveState> waves_;
  std::ofstream job_log_;
};

}  // namespace detail
}  // namespace ucores

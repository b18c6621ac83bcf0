#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "ucores/engine.hpp"
#include "ucores/scheduler.hpp"
#include "ucores/wire.hpp"
#include "ucores/worker.hpp"

namespace ucores {

struct LocalWorkerConfig {
  std::string worker_id;
  std::uint32_t cores = 1;
  ImplKind impl = ImplKind::STD;
  std::string arch = "HOST";
  DeviceDescriptor device;
  /// Fault injection: the worker crashes (stops replying and heartbeating)
  /// when it receives task number die_after_tasks + 1.
  int die_after_tasks = -1;
};

/// In-process loopback cluster. Runs as a discrete-event simulation on a
/// virtual clock: workers execute synchronously when stepped and every
/// message round-trips through the wire codec, so a given job always yields
/// the same outputs, the same task-to-worker assignments and the same log.
class LocalClusterDriver : public ClusterDriver {
 public:
  struct Options {
    std::uint64_t heartbeat_interval_ms = 500;
    int heartbeat_misses = 3;
    std::string job_log_path;  // JSON lines, one object per task result
  };

  explicit LocalClusterDriver(const KernelRegistry& registry, Options opts = {})
      : registry_(&registry), opts_(opts) {
    if (!opts_.job_log_path.empty()) core_.open_job_log(opts_.job_log_path);
    core_.timestamp_ms_ = [this] { return now_ms_; };  // virtual time in logs
  }

  /// Registers an in-process worker, applying the registry-hash handshake
  /// against `worker_registry` (the driver's own registry by default).
  RegisterAckMsg add_worker(const LocalWorkerConfig& cfg,
                            const KernelRegistry* worker_registry = nullptr) {
    std::lock_guard<std::mutex> lock(mutex_);
    const KernelRegistry& wreg = worker_registry ? *worker_registry : *registry_;
    auto worker = std::make_unique<LocalWorker>(cfg, wreg);

    // Registration round-trips the wire like any other message.
    Message reg = roundtrip(RegisterMsg{worker->runtime.capabilities(cfg.cores)});
    const WorkerCapabilities& caps = std::get<RegisterMsg>(reg).caps;
    if (caps.registry_hash != registry_->registry_hash()) {
      return RegisterAckMsg{false, "registry hash mismatch"};
    }
    if (core_.scheduler.has_worker(caps.worker_id)) {
      return RegisterAckMsg{false, "worker id already registered"};
    }
    core_.scheduler.add_worker(caps, now_ms_);
    workers_.emplace(cfg.worker_id, std::move(worker));
    return RegisterAckMsg{true, ""};
  }

  std::uint64_t new_job_id() override {
    std::lock_guard<std::mutex> lock(mutex_);
    return core_.allocate_job_id();
  }

  std::vector<TaskResult> run_wave(std::vector<Task> tasks, int max_retries) override {
    std::lock_guard<std::mutex> lock(mutex_);
    if (tasks.empty()) return {};
    const std::uint64_t job_id = tasks.front().job_id;
    detail::WaveState& wave = core_.start_wave(job_id, tasks, max_retries);
    pump(wave);
    return core_.finish_wave(job_id);
  }

  // -- observability -------------------------------------------------------

  std::uint64_t program_build_count(const std::string& worker_id,
                                    const std::string& kernel_name) const {
    auto it = workers_.find(worker_id);
    if (it == workers_.end()) return 0;
    return it->second->runtime.cache().build_count(kernel_name,
                                                   it->second->runtime.device().device_id);
  }

  std::size_t max_in_flight_observed(const std::string& worker_id) const {
    return core_.scheduler.max_in_flight_observed(worker_id);
  }

  std::vector<std::string> worker_ids() const { return core_.scheduler.worker_ids(); }

  std::uint64_t now_ms() const { return now_ms_; }

 private:
  struct LocalWorker {
    LocalWorker(const LocalWorkerConfig& cfg, const KernelRegistry& registry)
        : config(cfg), runtime(cfg.worker_id, registry, cfg.impl, cfg.arch, cfg.device) {}

    LocalWorkerConfig config;
    WorkerRuntime runtime;
    bool alive = true;
    int tasks_received = 0;
    std::uint64_t heartbeat_seq = 0;
  };

  static Message roundtrip(const Message& m) { return decode_frame(encode_frame(m)); }

  void pump(detail::WaveState& wave) {
    // A reply plus the worker it came from, as a connection would attribute it.
    std::deque<std::pair<std::string, Message>> events;
    while (!wave.finished()) {
      // Fill free capacity; execution is synchronous, replies queue up.
      for (const Scheduler::Assignment& a : core_.scheduler.take_assignments()) {
        auto& worker = *workers_.at(a.worker_id);
        Message submit = roundtrip(SubmitTaskMsg{a.task});
        worker.tasks_received++;
        if (worker.config.die_after_tasks >= 0 &&
            worker.tasks_received > worker.config.die_after_tasks) {
          worker.alive = false;  // crashed: no reply, no further heartbeats
          continue;
        }
        events.emplace_back(
            a.worker_id,
            roundtrip(worker.runtime.execute(std::get<SubmitTaskMsg>(submit).task)));
      }

      if (!events.empty()) {
        auto [from, ev] = std::move(events.front());
        events.pop_front();
        if (auto* res = std::get_if<TaskResultMsg>(&ev)) {
          core_.handle_result(*res);
        } else if (auto* err = std::get_if<TaskErrorMsg>(&ev)) {
          core_.handle_error(*err, from);
        }
        continue;
      }
      if (wave.finished()) break;

      // Nothing in flight can progress without time: advance the clock one
      // heartbeat interval and apply timeouts.
      now_ms_ += opts_.heartbeat_interval_ms;
      for (auto& [id, worker] : workers_) {
        if (worker->alive && core_.scheduler.has_worker(id)) {
          Message hb = roundtrip(HeartbeatMsg{id, ++worker->heartbeat_seq});
          core_.scheduler.heartbeat(std::get<HeartbeatMsg>(hb).worker_id, now_ms_);
        }
      }
      for (const std::string& id :
           core_.scheduler.timed_out(now_ms_, opts_.heartbeat_interval_ms,
                                     opts_.heartbeat_misses)) {
        core_.handle_worker_dead(id);
        workers_.at(id)->alive = false;
      }
      if (core_.scheduler.alive_workers() == 0 && !wave.finished()) {
        wave.failure = "no live workers remain";
      }
    }
  }

  const KernelRegistry* registry_;
  Options opts_;
  detail::DriverCore core_;
  std::map<std::string, std::unique_ptr<LocalWorker>> workers_;
  std::uint64_t now_ms_ = 0;
  std::mutex mutex_;
};

}  // namespace ucores

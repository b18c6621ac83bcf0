#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ucores/dataset.hpp"
#include "ucores/errors.hpp"
#include "ucores/kernel.hpp"
#include "ucores/task.hpp"

namespace ucores {

struct EngineConfig {
  std::uint64_t min_device_elements = 4096;
  std::uint64_t min_device_bytes = 65536;
  static constexpr int reduce_arity = 2;  // pairwise tree reduce
  int max_retries = 2;
};

/// Device execution is recommended only when both thresholds are met;
/// kernels consult this inside map_parameters to drive set_device_execution.
inline bool plan_offload(const EngineConfig& cfg, std::uint64_t element_count,
                         std::uint64_t byte_count) {
  return element_count >= cfg.min_device_elements && byte_count >= cfg.min_device_bytes;
}

/// Transport-side contract the engine plans against: waves of independent
/// tasks, executed with retries, results returned sorted by task id.
/// Implementations: LocalClusterDriver (deterministic, in-process) and
/// TcpMaster (sockets).
class ClusterDriver {
 public:
  virtual ~ClusterDriver() = default;
  virtual std::uint64_t new_job_id() = 0;
  virtual std::vector<TaskResult> run_wave(std::vector<Task> tasks, int max_retries) = 0;
};

/// Driver-side operators: per-element map, per-partition map, and the
/// two-stage pairwise tree reduce. Plans are deterministic functions of the
/// dataset shape, so equal inputs give equal task graphs.
class Engine {
 public:
  Engine(ClusterDriver& driver, const KernelRegistry& registry, EngineConfig cfg = {})
      : driver_(&driver), registry_(&registry), cfg_(cfg) {}

  const EngineConfig& config() const { return cfg_; }

  /// One task per element; the output dataset mirrors the input partition
  /// structure, with element i mapped from input element i regardless of
  /// completion order.
  Dataset map_cl(const Dataset& d, const std::string& kernel_name,
                 std::optional<ExecutionMode> mode_hint = std::nullopt) const {
    require_arity(kernel_name, KernelArity::Unary);
    const std::uint64_t job_id = driver_->new_job_id();

    std::vector<Task> tasks;
    tasks.reserve(d.count());
    std::uint64_t task_id = 0;
    for (const Partition& p : d.partitions()) {
      for (const Element& e : p.elements) {
        Task t;
        t.job_id = job_id;
        t.task_id = task_id++;
        t.kind = TaskKind::Map;
        t.kernel_name = kernel_name;
        t.inputs = {e};
        t.mode_hint = mode_hint;
        tasks.push_back(std::move(t));
      }
    }
    std::vector<TaskResult> results = driver_->run_wave(std::move(tasks), cfg_.max_retries);

    std::vector<Partition> out(d.partition_count());
    std::size_t i = 0;
    for (const Partition& p : d.partitions()) {
      out[p.index].index = p.index;
      for (std::size_t k = 0; k < p.elements.size(); ++k) {
        out[p.index].elements.push_back(std::move(results[i++].output));
      }
    }
    return Dataset(std::move(out));
  }

  /// One task per partition; the kernel input is the concatenation of the
  /// partition's elements (one array variant per partition).
  Dataset map_cl_partition(const Dataset& d, const std::string& kernel_name,
                           std::optional<ExecutionMode> mode_hint = std::nullopt) const {
    require_arity(kernel_name, KernelArity::Unary);
    const std::uint64_t job_id = driver_->new_job_id();

    std::vector<Task> tasks;
    tasks.reserve(d.partition_count());
    for (const Partition& p : d.partitions()) {
      Task t;
      t.job_id = job_id;
      t.task_id = p.index;
      t.kind = TaskKind::MapPartition;
      t.kernel_name = kernel_name;
      t.inputs = {Element::concat(p.elements)};
      t.mode_hint = mode_hint;
      tasks.push_back(std::move(t));
    }
    std::vector<TaskResult> results = driver_->run_wave(std::move(tasks), cfg_.max_retries);

    std::vector<Partition> out(d.partition_count());
    for (std::size_t p = 0; p < results.size(); ++p) {
      out[p].index = p;
      out[p].elements.push_back(std::move(results[p].output));
    }
    return Dataset(std::move(out));
  }

  /// Stage 1: left-to-right pairwise fold inside each partition, every pair
  /// a worker task. Stage 2: a binary tree over the per-partition partials
  /// in partition order, pairing (0,1),(2,3),... per round; an unpaired
  /// trailing partial promotes unchanged. A single-element dataset returns
  /// that element with zero kernel invocations.
  Element reduce_cl(const Dataset& d, const std::string& kernel_name,
                    std::optional<ExecutionMode> mode_hint = std::nullopt) const {
    require_arity(kernel_name, KernelArity::Binary);
    if (d.count() == 0) throw EmptyDataset("reduce_cl needs at least one element");
    if (d.count() == 1) {
      for (const Partition& p : d.partitions()) {
        if (!p.elements.empty()) return p.elements.front();
      }
    }
    const std::uint64_t job_id = driver_->new_job_id();
    std::uint64_t next_task_id = 0;

    auto reduce_pair = [&](Element left, Element right) {
      Task t;
      t.job_id = job_id;
      t.task_id = next_task_id++;
      t.kind = TaskKind::ReducePair;
      t.kernel_name = kernel_name;
      t.inputs = {std::move(left), std::move(right)};
      t.mode_hint = mode_hint;
      return t;
    };

    // Stage 1: fold each partition left-to-right. Folds across partitions
    // advance together, one pairing per wave per unfinished partition.
    struct Fold {
      Element acc;
      const std::vector<Element>* elements;
      std::size_t next;
    };
    std::vector<Fold> folds;
    for (const Partition& p : d.partitions()) {
      if (!p.elements.empty()) folds.push_back(Fold{p.elements.front(), &p.elements, 1});
    }
    while (true) {
      std::vector<Task> tasks;
      std::vector<Fold*> involved;
      for (Fold& f : folds) {
        if (f.next < f.elements->size()) {
          tasks.push_back(reduce_pair(std::move(f.acc), (*f.elements)[f.next]));
          f.next++;
          involved.push_back(&f);
        }
      }
      if (tasks.empty()) break;
      std::vector<TaskResult> results = driver_->run_wave(std::move(tasks), cfg_.max_retries);
      for (std::size_t i = 0; i < involved.size(); ++i) {
        involved[i]->acc = std::move(results[i].output);
      }
    }

    // Stage 2: binary tree over the partials, one round per wave.
    std::vector<Element> partials;
    partials.reserve(folds.size());
    for (Fold& f : folds) partials.push_back(std::move(f.acc));
    while (partials.size() > 1) {
      std::vector<Task> tasks;
      for (std::size_t i = 0; i + 1 < partials.size(); i += 2) {
        tasks.push_back(reduce_pair(std::move(partials[i]), std::move(partials[i + 1])));
      }
      const bool trailing = partials.size() % 2 == 1;
      Element promoted;
      if (trailing) promoted = std::move(partials.back());
      std::vector<TaskResult> results = driver_->run_wave(std::move(tasks), cfg_.max_retries);
      std::vector<Element> next;
      next.reserve(results.size() + (trailing ? 1 : 0));
      for (TaskResult& r : results) next.push_back(std::move(r.output));
      if (trailing) next.push_back(std::move(promoted));
      partials.swap(next);
    }
    return std::move(partials.front());
  }

 private:
  void require_arity(const std::string& kernel_name, KernelArity want) const {
    const KernelArity have = registry_->arity(kernel_name);  // throws UnknownKernel
    if (have != want) {
      throw ArityMismatch("kernel '" + kernel_name + "' is " +
                          (have == KernelArity::Unary ? "unary" : "binary") + ", expected " +
                          (want == KernelArity::Unary ? "unary" : "binary"));
    }
  }

  ClusterDriver* driver_;
  const KernelRegistry* registry_;
  EngineConfig cfg_;
};

}  // namespace ucores

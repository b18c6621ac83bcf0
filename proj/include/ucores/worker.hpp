#pragma once

#include <memory>
#include <string>
#include <utility>

#include "ucores/device.hpp"
#include "ucores/errors.hpp"
#include "ucores/kernel.hpp"
#include "ucores/task.hpp"
#include "ucores/wire.hpp"

namespace ucores {

/// Task execution on a worker's bound device: kernel instantiation by name,
/// program provisioning through the per-worker cache, and the three-phase
/// lifecycle. Shared by the in-process and TCP workers.
class WorkerRuntime {
 public:
  WorkerRuntime(std::string worker_id, const KernelRegistry& registry, ImplKind impl,
                std::string arch, DeviceDescriptor device)
      : worker_id_(std::move(worker_id)),
        registry_(&registry),
        impl_(impl),
        arch_(std::move(arch)),
        device_(std::move(device)),
        executor_(make_executor(device_)) {}

  WorkerCapabilities capabilities(std::uint32_t cores) const {
    return WorkerCapabilities{worker_id_, cores, summarize(impl_, arch_, device_),
                              registry_->registry_hash()};
  }

  const std::string& worker_id() const { return worker_id_; }
  const DeviceDescriptor& device() const { return device_; }
  const ProgramCache& cache() const { return cache_; }

  /// Executes one task; never throws. Failures become TASK_ERROR replies
  /// carrying the failing phase.
  Message execute(const Task& task) {
    try {
      const Provisioning mode = device_.provisioning.count(Provisioning::BuildFromSource)
                                    ? Provisioning::BuildFromSource
                                    : Provisioning::LoadBinary;
      provision_program(cache_, *registry_, device_, task.kernel_name, mode);

      TaskResult result;
      result.job_id = task.job_id;
      result.task_id = task.task_id;
      result.worker_id = worker_id_;
      if (task.kind == TaskKind::ReducePair) {
        if (task.inputs.size() != 2) throw Error("REDUCE_PAIR task must carry 2 inputs");
        auto kernel = registry_->instantiate_binary(task.kernel_name);
        result.output = execute_kernel_lifecycle(*kernel, task.inputs[0], task.inputs[1],
                                                 *executor_, &result.metrics);
      } else {
        if (task.inputs.size() != 1) throw Error("task must carry 1 input");
        auto kernel = registry_->instantiate_unary(task.kernel_name);
        result.output =
            execute_kernel_lifecycle(*kernel, task.inputs[0], *executor_, &result.metrics);
      }
      if (result.metrics.executor_kind.empty()) {
        // Selective execution: the run phase never launched.
        result.metrics.executor_kind = "host-fallback";
      }
      return TaskResultMsg{std::move(result)};
    } catch (const KernelPanic& e) {
      return TaskErrorMsg{task.job_id, task.task_id, e.phase(), e.what()};
    } catch (const std::exception& e) {
      return TaskErrorMsg{task.job_id, task.task_id, "dispatch", e.what()};
    }
  }

 private:
  std::string worker_id_;
  const KernelRegistry* registry_;
  ImplKind impl_;
  std::string arch_;
  DeviceDescriptor device_;
  std::unique_ptr<KernelExecutor> executor_;
  ProgramCache cache_;
};

}  // namespace ucores

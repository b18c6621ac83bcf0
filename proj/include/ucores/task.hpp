#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ucores/element.hpp"
#include "ucores/kernel.hpp"

namespace ucores {

enum class TaskKind : std::uint8_t { Map = 1, MapPartition = 2, ReducePair = 3 };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Map: return "MAP";
    case TaskKind::MapPartition: return "MAP_PARTITION";
    case TaskKind::ReducePair: return "REDUCE_PAIR";
  }
  return "?";
}

/// The unit of work shipped driver -> worker. Carries one input element
/// (two for REDUCE_PAIR); MAP_PARTITION tasks may additionally ship the
/// partition's individual elements as partition_payload. The mode hint is
/// advisory: a worker always executes on its bound device.
struct Task {
  std::uint64_t job_id = 0;
  std::uint64_t task_id = 0;
  TaskKind kind = TaskKind::Map;
  std::string kernel_name;
  std::vector<Element> inputs;
  std::vector<Element> partition_payload;
  std::optional<ExecutionMode> mode_hint;

  bool operator==(const Task& o) const {
    return job_id == o.job_id && task_id == o.task_id && kind == o.kind &&
           kernel_name == o.kernel_name && inputs == o.inputs &&
           partition_payload == o.partition_payload && mode_hint == o.mode_hint;
  }
};

/// Reply for one task. job_id scopes task_id, which is only unique per job.
struct TaskResult {
  std::uint64_t job_id = 0;
  std::uint64_t task_id = 0;
  Element output;
  ExecMetrics metrics;
  std::string worker_id;

  bool operator==(const TaskResult& o) const {
    return job_id == o.job_id && task_id == o.task_id && output == o.output &&
           worker_id == o.worker_id && metrics.items == o.metrics.items &&
           metrics.bytes_moved == o.metrics.bytes_moved &&
           metrics.simulated_ns == o.metrics.simulated_ns &&
           metrics.executor_kind == o.metrics.executor_kind &&
           metrics.device_invocations == o.metrics.device_invocations;
  }
};

}  // namespace ucores

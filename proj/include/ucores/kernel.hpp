#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "ucores/element.hpp"
#include "ucores/errors.hpp"

namespace ucores {

/// Preferred execution device. ACC is an accelerator (e.g. FPGA), JTP the
/// host thread-pool fallback.
enum class ExecutionMode : std::uint8_t { CPU = 1, GPU = 2, ACC = 3, JTP = 4 };

inline const char* to_string(ExecutionMode m) {
  switch (m) {
    case ExecutionMode::CPU: return "cpu";
    case ExecutionMode::GPU: return "gpu";
    case ExecutionMode::ACC: return "acc";
    case ExecutionMode::JTP: return "jtp";
  }
  return "?";
}

inline std::optional<ExecutionMode> execution_mode_from(std::string_view s) {
  if (s == "cpu" || s == "CPU") return ExecutionMode::CPU;
  if (s == "gpu" || s == "GPU") return ExecutionMode::GPU;
  if (s == "acc" || s == "ACC") return ExecutionMode::ACC;
  if (s == "jtp" || s == "JTP") return ExecutionMode::JTP;
  return std::nullopt;
}

/// 1-D global work size.
struct RangeSpec {
  std::size_t global_size = 0;
};

/// Observability record filled by the run-phase executor. simulated_ns is
/// the cost-model charge for simulated accelerators and 0 for host
/// executors; device_invocations counts run-phase launches.
struct ExecMetrics {
  std::uint64_t items = 0;
  std::uint64_t bytes_moved = 0;
  std::uint64_t simulated_ns = 0;
  std::string executor_kind;
  std::uint64_t device_invocations = 0;
};

namespace detail {

template <class T>
inline constexpr bool is_buffer_type =
    std::is_same_v<T, float> || std::is_same_v<T, double> || std::is_same_v<T, std::int32_t> ||
    std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint8_t>;

}  // namespace detail

/// Per-execution state a kernel sees: the 1-D range, the selective-execution
/// flag, the named primitive buffers, and the metrics sink. Buffers bound
/// here are the only state run() may read or write.
///
/// set_range, set_device_execution and buffer binding are legal only during
/// map_parameters; the lifecycle advances the phase.
class KernelContext {
 public:
  enum class Phase { MapParameters, Run, MapReturnValue };

  KernelContext() = default;

  // -- map_parameters API ------------------------------------------------

  /// Single assignment per execution.
  void set_range(std::size_t n) {
    require_phase(Phase::MapParameters, "set_range");
    if (range_.has_value()) throw RangeAlreadySet("range was already set for this execution");
    range_ = RangeSpec{n};
  }

  /// One-way switch: a kernel may decline device execution, never re-enable it.
  void set_device_execution(bool enabled) {
    require_phase(Phase::MapParameters, "set_device_execution");
    if (enabled && !device_execution_) {
      throw Error("device_execution is one-way per execution; cannot re-enable");
    }
    device_execution_ = enabled;
  }

  void request_mode(ExecutionMode m) {
    require_phase(Phase::MapParameters, "request_mode");
    requested_mode_ = m;
  }

  /// Copies `data` into a named buffer and returns a writable view of it.
  template <class T>
  std::span<T> bind(std::string name, std::span<const T> data) {
    static_assert(detail::is_buffer_type<T>, "unsupported buffer type");
    require_phase(Phase::MapParameters, "bind");
    auto [it, inserted] =
        buffers_.emplace(std::move(name), std::vector<T>(data.begin(), data.end()));
    if (!inserted) throw Error("buffer already bound: " + it->first);
    auto& vec = std::get<std::vector<T>>(it->second);
    return {vec.data(), vec.size()};
  }

  /// Allocates a zero-initialized buffer of n entries.
  template <class T>
  std::span<T> alloc(std::string name, std::size_t n) {
    static_assert(detail::is_buffer_type<T>, "unsupported buffer type");
    require_phase(Phase::MapParameters, "alloc");
    auto [it, inserted] = buffers_.emplace(std::move(name), std::vector<T>(n, T{}));
    if (!inserted) throw Error("buffer already bound: " + it->first);
    auto& vec = std::get<std::vector<T>>(it->second);
    return {vec.data(), vec.size()};
  }

  // -- any phase -----------------------------------------------------------

  template <class T>
  std::span<T> buffer(std::string_view name) {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw Error("no such buffer: " + std::string(name));
    auto* vec = std::get_if<std::vector<T>>(&it->second);
    if (!vec) throw Error("buffer type mismatch: " + std::string(name));
    return {vec->data(), vec->size()};
  }

  /// Moves a buffer's storage out, typically to build the result Element.
  template <class T>
  std::vector<T> take(std::string_view name) {
    require_phase(Phase::MapReturnValue, "take");
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw Error("no such buffer: " + std::string(name));
    auto* vec = std::get_if<std::vector<T>>(&it->second);
    if (!vec) throw Error("buffer type mismatch: " + std::string(name));
    std::vector<T> out = std::move(*vec);
    buffers_.erase(it);
    return out;
  }

  bool range_set() const { return range_.has_value(); }
  const RangeSpec& range() const {
    if (!range_) throw Error("range not set");
    return *range_;
  }
  bool device_execution() const { return device_execution_; }
  std::optional<ExecutionMode> requested_mode() const { return requested_mode_; }

  /// Total bytes held in bound buffers; the transfer volume a device would see.
  std::size_t buffer_bytes() const {
    std::size_t total = 0;
    for (const auto& [name, buf] : buffers_) {
      total += std::visit(
          [](const auto& v) {
            return v.size() * sizeof(typename std::decay_t<decltype(v)>::value_type);
          },
          buf);
    }
    return total;
  }

  ExecMetrics& metrics() { return metrics_; }
  const ExecMetrics& metrics() const { return metrics_; }

  Phase phase() const { return phase_; }
  void advance_phase(Phase p) { phase_ = p; }

 private:
  using Buffer = std::variant<std::vector<float>, std::vector<double>, std::vector<std::int32_t>,
                              std::vector<std::int64_t>, std::vector<std::uint8_t>>;

  void require_phase(Phase p, const char* what) const {
    if (phase_ != p) {
      const char* name = p == Phase::MapParameters ? "map_parameters" : "map_return_value";
      throw Error(std::string(what) + " is only legal during " + name);
    }
  }

  Phase phase_ = Phase::MapParameters;
  std::optional<RangeSpec> range_;
  bool device_execution_ = true;
  std::optional<ExecutionMode> requested_mode_;
  std::map<std::string, Buffer, std::less<>> buffers_;
  ExecMetrics metrics_;
};

/// Three-phase kernel over one input element. run() must be pure per
/// work-item given the context buffers: it may read any input slot but
/// write only slots indexed by its own gid, so invocation order and
/// parallelism never change the output.
class UnaryKernel {
 public:
  virtual ~UnaryKernel() = default;
  virtual void map_parameters(KernelContext& ctx, const Element& input) = 0;
  virtual void run(KernelContext& ctx, std::size_t gid) = 0;
  virtual Element map_return_value(KernelContext& ctx, const Element& input) = 0;
};

/// Two-input kernel variant, used by the pairwise reduce.
class BinaryKernel {
 public:
  virtual ~BinaryKernel() = default;
  virtual void map_parameters(KernelContext& ctx, const Element& left, const Element& right) = 0;
  virtual void run(KernelContext& ctx, std::size_t gid) = 0;
  virtual Element map_return_value(KernelContext& ctx, const Element& left,
                                   const Element& right) = 0;
};

/// Runs the run() phase of a kernel over gids [0, global_size). Implemented
/// by the device layer; tests may supply their own orderings.
class KernelExecutor {
 public:
  virtual ~KernelExecutor() = default;
  virtual std::string_view kind() const = 0;
  virtual void execute(KernelContext& ctx, const std::function<void(std::size_t)>& run_item) = 0;

 protected:
  /// Common metrics bookkeeping for one launch.
  void note_launch(KernelContext& ctx) const {
    ExecMetrics& m = ctx.metrics();
    m.items += ctx.range().global_size;
    m.bytes_moved += ctx.buffer_bytes();
    m.executor_kind = std::string(kind());
    m.device_invocations += 1;
  }
};

namespace detail {

template <class Fn>
auto run_phase(const char* phase, Fn&& fn) {
  try {
    return fn();
  } catch (const KernelPanic&) {
    throw;
  } catch (const std::exception& e) {
    throw KernelPanic(phase, e.what());
  } catch (...) {
    throw KernelPanic(phase, "unknown error");
  }
}

template <class MapParams, class MapReturn>
Element lifecycle(KernelContext& ctx, MapParams&& map_params, UnaryKernel* uk, BinaryKernel* bk,
                  KernelExecutor& executor, MapReturn&& map_return) {
  run_phase("map_parameters", [&] { map_params(); return 0; });
  if (ctx.device_execution()) {
    if (!ctx.range_set()) throw KernelPanic("run", "range not set but device execution requested");
    ctx.advance_phase(KernelContext::Phase::Run);
    run_phase("run", [&] {
      executor.execute(ctx, [&](std::size_t gid) {
        if (uk) uk->run(ctx, gid);
        else bk->run(ctx, gid);
      });
      return 0;
    });
  }
  ctx.advance_phase(KernelContext::Phase::MapReturnValue);
  return run_phase("map_return_value", [&] { return map_return(); });
}

}  // namespace detail

/// Strict three-phase lifecycle: map_parameters, then (unless the kernel
/// declined device execution) the executor drives run() once per gid, then
/// map_return_value. Each phase runs exactly once; failures are rethrown as
/// KernelPanic naming the phase.
inline Element execute_kernel_lifecycle(UnaryKernel& k, const Element& input,
                                        KernelExecutor& executor,
                                        ExecMetrics* metrics_out = nullptr) {
  KernelContext ctx;
  Element result = detail::lifecycle(
      ctx, [&] { k.map_parameters(ctx, input); }, &k, nullptr, executor,
      [&] { return k.map_return_value(ctx, input); });
  if (metrics_out) *metrics_out = ctx.metrics();
  return result;
}

inline Element execute_kernel_lifecycle(BinaryKernel& k, const Element& left, const Element& right,
                                        KernelExecutor& executor,
                                        ExecMetrics* metrics_out = nullptr) {
  KernelContext ctx;
  Element result = detail::lifecycle(
      ctx, [&] { k.map_parameters(ctx, left, right); }, nullptr, &k, executor,
      [&] { return k.map_return_value(ctx, left, right); });
  if (metrics_out) *metrics_out = ctx.metrics();
  return result;
}

enum class KernelArity : std::uint8_t { Unary = 1, Binary = 2 };

/// Name-keyed kernel catalog. Kernels ship between driver and workers by
/// name only, so both sides must hold the same (name, arity) set; the
/// registry hash makes that checkable at registration handshake.
class KernelRegistry {
 public:
  using UnaryFactory = std::function<std::unique_ptr<UnaryKernel>()>;
  using BinaryFactory = std::function<std::unique_ptr<BinaryKernel>()>;

  void register_unary(const std::string& name, UnaryFactory factory) {
    add(name, KernelArity::Unary, std::move(factory), nullptr);
  }

  void register_binary(const std::string& name, BinaryFactory factory) {
    add(name, KernelArity::Binary, nullptr, std::move(factory));
  }

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

  KernelArity arity(std::string_view name) const { return entry(name).arity; }

  /// Fresh instance per call; kernel state never leaks between tasks.
  std::unique_ptr<UnaryKernel> instantiate_unary(std::string_view name) const {
    const Entry& e = entry(name);
    if (e.arity != KernelArity::Unary) {
      throw ArityMismatch("kernel '" + std::string(name) + "' is binary, not unary");
    }
    return e.unary();
  }

  std::unique_ptr<BinaryKernel> instantiate_binary(std::string_view name) const {
    const Entry& e = entry(name);
    if (e.arity != KernelArity::Binary) {
      throw ArityMismatch("kernel '" + std::string(name) + "' is unary, not binary");
    }
    return e.binary();
  }

  /// Digest of the sorted (name, arity) list; insertion order never matters.
  std::uint64_t registry_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    auto mix = [&h](std::uint8_t b) {
      h ^= b;
      h *= 0x100000001b3ull;
    };
    for (const auto& [name, e] : entries_) {  // std::map iterates sorted by name
      for (char c : name) mix(static_cast<std::uint8_t>(c));
      mix(0);
      mix(static_cast<std::uint8_t>(e.arity));
    }
    return h;
  }

  std::vector<std::pair<std::string, KernelArity>> names() const {
    std::vector<std::pair<std::string, KernelArity>> out;
    for (const auto& [name, e] : entries_) out.emplace_back(name, e.arity);
    return out;
  }

 private:
  struct Entry {
    KernelArity arity;
    UnaryFactory unary;
    BinaryFactory binary;
  };

  void add(const std::string& name, KernelArity arity, UnaryFactory uf, BinaryFactory bf) {
    auto [it, inserted] = entries_.emplace(name, Entry{arity, std::move(uf), std::move(bf)});
    if (!inserted) throw DuplicateKernelName("kernel already registered: " + name);
  }

  const Entry& entry(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UnknownKernel("no kernel named '" + std::string(name) + "'");
    return it->second;
  }

  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace ucores

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ucores/errors.hpp"
#include "ucores/kernel.hpp"

namespace ucores {

enum class ImplKind : std::uint8_t { STD = 1, FPGA = 2 };

inline const char* to_string(ImplKind k) { return k == ImplKind::STD ? "std" : "fpga"; }

enum class Provisioning : std::uint8_t { BuildFromSource = 1, LoadBinary = 2 };

/// Linear offload cost: setup_ns per launch, per_byte_ns per transferred
/// byte, per_item_ns per lock-step batch of `width` work-items.
struct CostModel {
  std::uint64_t setup_ns = 0;
  double per_byte_ns = 0.0;
  double per_item_ns = 100.0;
  std::uint32_t width = 1;
};

inline CostModel default_accelerator_cost() { return CostModel{50000, 0.25, 10.0, 256}; }
inline CostModel default_host_cost() { return CostModel{0, 0.0, 100.0, 1}; }

/// setup + bytes*per_byte + ceil(items/width)*per_item, rounded half-up.
inline std::uint64_t estimate_offload_ns(const CostModel& cost, std::uint64_t items,
                                         std::uint64_t bytes) {
  const std::uint64_t batches = cost.width ? (items + cost.width - 1) / cost.width : items;
  const double ns = static_cast<double>(cost.setup_ns) +
                    static_cast<double>(bytes) * cost.per_byte_ns +
                    static_cast<double>(batches) * cost.per_item_ns;
  return static_cast<std::uint64_t>(std::floor(ns + 0.5));
}

struct DeviceDescriptor {
  std::string device_id;
  ExecutionMode device_type = ExecutionMode::CPU;
  std::uint32_t parallel_width = 1;
  CostModel cost;
  std::set<Provisioning> provisioning{Provisioning::BuildFromSource, Provisioning::LoadBinary};
};

struct PlatformDescriptor {
  ImplKind impl_kind = ImplKind::STD;
  std::string arch;
  std::vector<DeviceDescriptor> devices;
};

// ---------------------------------------------------------------------------
// Inventory: a declarative JSON stand-in for ICD platform enumeration.
//
//   { "platforms": [ { "impl": "std"|"fpga", "arch": "<label>",
//       "devices": [ { "id": "<unique>", "type": "cpu"|"gpu"|"acc"|"jtp",
//                      "width": <int>=1, optional>,
//                      "provisioning": ["source","binary"]  (optional),
//                      "cost": { "setup_ns": u64, "per_byte_ns": f,
//                                "per_item_ns": f, "width": u32 }  (optional)
//                    } ] } ] }
//
// Defaults: cpu/jtp devices get the host cost model, gpu/acc the accelerator
// model; width defaults to 1 (cpu), the host parallelism (jtp) or the cost
// model width (gpu/acc). Devices on fpga platforms load binaries only.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

inline CostModel default_cost_for(ExecutionMode type, unsigned host_parallelism) {
  switch (type) {
    case ExecutionMode::CPU: return default_host_cost();
    case ExecutionMode::JTP: {
      CostModel c = default_host_cost();
      c.width = std::max(1u, host_parallelism);
      return c;
    }
    default: return default_accelerator_cost();
  }
}

inline std::uint32_t default_width_for(ExecutionMode type, unsigned host_parallelism) {
  switch (type) {
    case ExecutionMode::CPU: return 1;
    case ExecutionMode::JTP: return std::max(1u, host_parallelism);
    default: return default_accelerator_cost().width;
  }
}

}  // namespace detail

inline unsigned default_host_parallelism() {
  unsigned n = std::thread::hardware_concurrency();
  return n ? n : 4;
}

/// Parses an inventory document. Errors cite the offending line or entry.
inline std::vector<PlatformDescriptor> parse_inventory(
    const std::string& text, unsigned host_parallelism = default_host_parallelism()) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InventoryParseError("inventory line " +
                              std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                              e.what());
  }

  auto fail = [](const std::string& where, const std::string& what) -> void {
    throw InventoryParseError("inventory " + where + ": " + what);
  };

  if (!doc.is_object() || !doc.contains("platforms") || !doc["platforms"].is_array()) {
    fail("document", "expected top-level object with a \"platforms\" array");
  }

  std::vector<PlatformDescriptor> platforms;
  std::set<std::string> seen_ids;
  std::size_t pi = 0;
  for (const auto& pj : doc["platforms"]) {
    const std::string pwhere = "platforms[" + std::to_string(pi) + "]";
    PlatformDescriptor plat;
    if (!pj.is_object()) fail(pwhere, "expected an object");
    const std::string impl = pj.value("impl", "");
    if (impl == "std") plat.impl_kind = ImplKind::STD;
    else if (impl == "fpga") plat.impl_kind = ImplKind::FPGA;
    else fail(pwhere, "impl must be \"std\" or \"fpga\"");
    plat.arch = pj.value("arch", "");
    if (plat.arch.empty()) fail(pwhere, "arch must be a non-empty string");
    if (!pj.contains("devices") || !pj["devices"].is_array()) {
      fail(pwhere, "expected a \"devices\" array");
    }

    std::size_t di = 0;
    for (const auto& dj : pj["devices"]) {
      const std::string dwhere = pwhere + ".devices[" + std::to_string(di) + "]";
      if (!dj.is_object()) fail(dwhere, "expected an object");
      DeviceDescriptor dev;
      dev.device_id = dj.value("id", "");
      if (dev.device_id.empty()) fail(dwhere, "id must be a non-empty string");
      if (!seen_ids.insert(dev.device_id).second) {
        fail(dwhere, "duplicate device id '" + dev.device_id + "'");
      }
      auto mode = execution_mode_from(dj.value("type", ""));
      if (!mode) fail(dwhere, "type must be one of cpu/gpu/acc/jtp");
      dev.device_type = *mode;
      dev.parallel_width = dj.value("width", detail::default_width_for(*mode, host_parallelism));
      if (dev.parallel_width < 1) fail(dwhere, "width must be >= 1");

      dev.cost = detail::default_cost_for(*mode, host_parallelism);
      if (dj.contains("cost")) {
        const auto& cj = dj["cost"];
        if (!cj.is_object()) fail(dwhere, "cost must be an object");
        dev.cost.setup_ns = cj.value("setup_ns", dev.cost.setup_ns);
        dev.cost.per_byte_ns = cj.value("per_byte_ns", dev.cost.per_byte_ns);
        dev.cost.per_item_ns = cj.value("per_item_ns", dev.cost.per_item_ns);
        dev.cost.width = cj.value("width", dev.cost.width);
        if (dev.cost.per_byte_ns < 0 || dev.cost.per_item_ns <= 0 || dev.cost.width < 1) {
          fail(dwhere, "cost fields out of range");
        }
      }

      if (plat.impl_kind == ImplKind::FPGA) {
        // Binary execution flow is the only provisioning an FPGA device has.
        if (dj.contains("provisioning")) {
          for (const auto& s : dj["provisioning"]) {
            if (s != "binary") fail(dwhere, "fpga devices support binary provisioning only");
          }
        }
        dev.provisioning = {Provisioning::LoadBinary};
      } else if (dj.contains("provisioning")) {
        dev.provisioning.clear();
        for (const auto& s : dj["provisioning"]) {
          if (s == "source") dev.provisioning.insert(Provisioning::BuildFromSource);
          else if (s == "binary") dev.provisioning.insert(Provisioning::LoadBinary);
          else fail(dwhere, "provisioning entries must be \"source\" or \"binary\"");
        }
        if (dev.provisioning.empty()) fail(dwhere, "provisioning must not be empty");
      }

      plat.devices.push_back(std::move(dev));
      ++di;
    }
    platforms.push_back(std::move(plat));
    ++pi;
  }
  return platforms;
}

/// Default inventory: one STD/"HOST" platform with a sequential CPU device
/// and a JTP device as wide as the host parallelism.
inline std::vector<PlatformDescriptor> default_inventory(
    unsigned host_parallelism = default_host_parallelism()) {
  PlatformDescriptor host;
  host.impl_kind = ImplKind::STD;
  host.arch = "HOST";
  DeviceDescriptor cpu;
  cpu.device_id = "host-cpu-0";
  cpu.device_type = ExecutionMode::CPU;
  cpu.parallel_width = 1;
  cpu.cost = default_host_cost();
  DeviceDescriptor jtp;
  jtp.device_id = "host-jtp-0";
  jtp.device_type = ExecutionMode::JTP;
  jtp.parallel_width = std::max(1u, host_parallelism);
  jtp.cost = detail::default_cost_for(ExecutionMode::JTP, host_parallelism);
  host.devices = {std::move(cpu), std::move(jtp)};
  return {std::move(host)};
}

/// Deterministic platform list: inventory order when a file is given, the
/// default host platform otherwise.
inline std::vector<PlatformDescriptor> enumerate_platforms(
    const std::string& inventory_path = "",
    unsigned host_parallelism = default_host_parallelism()) {
  if (inventory_path.empty()) return default_inventory(host_parallelism);
  std::ifstream in(inventory_path, std::ios::binary);
  if (!in) throw InventoryParseError("cannot open inventory file: " + inventory_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_inventory(ss.str(), host_parallelism);
}

namespace detail {

inline bool arch_contains(std::string_view arch, std::string_view filter) {
  if (filter.empty()) return true;
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  return lower(arch).find(lower(filter)) != std::string::npos;
}

}  // namespace detail

/// First device in inventory order matching (exact impl, case-insensitive
/// arch substring, exact device type).
inline DeviceDescriptor select_device(const std::vector<PlatformDescriptor>& platforms,
                                      ImplKind impl_filter, std::string_view arch_filter,
                                      ExecutionMode device_type) {
  for (const PlatformDescriptor& plat : platforms) {
    if (plat.impl_kind != impl_filter) continue;
    if (!detail::arch_contains(plat.arch, arch_filter)) continue;
    for (const DeviceDescriptor& dev : plat.devices) {
      if (dev.device_type == device_type) return dev;
    }
  }
  std::string msg = "no device matches impl=" + std::string(to_string(impl_filter)) +
                    " arch~\"" + std::string(arch_filter) + "\" type=" +
                    to_string(device_type) + "; available:";
  for (const PlatformDescriptor& plat : platforms) {
    msg += std::string(" [") + to_string(plat.impl_kind) + " " + plat.arch + ":";
    for (const DeviceDescriptor& dev : plat.devices) {
      msg += std::string(" ") + to_string(dev.device_type);
    }
    msg += "]";
  }
  throw NoMatchingDevice(msg);
}

// ---------------------------------------------------------------------------
// Program provisioning
// ---------------------------------------------------------------------------

struct ProgramHandle {
  std::string kernel_name;
  std::string device_id;
  Provisioning mode = Provisioning::BuildFromSource;
  std::uint64_t build_id = 0;
};

/// Caches one provisioned program per (kernel name, device). Safe for
/// concurrent provisioning; a key is built at most once.
class ProgramCache {
 public:
  ProgramHandle provision(const KernelRegistry& registry, const DeviceDescriptor& device,
                          const std::string& kernel_name, Provisioning mode) {
    if (!device.provisioning.count(mode)) {
      throw UnsupportedProvisioning(
          std::string(mode == Provisioning::BuildFromSource ? "source build" : "binary load") +
          " not supported by device " + device.device_id);
    }
    if (!registry.contains(kernel_name)) {
      throw UnknownKernel("cannot provision unregistered kernel '" + kernel_name + "'");
    }
    std::lock_guard<std::mutex> lock(mutex_);
    const Key key{kernel_name, device.device_id};
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
    ProgramHandle handle{kernel_name, device.device_id, mode, ++next_build_id_};
    build_counts_[key] += 1;
    entries_.emplace(key, handle);
    return handle;
  }

  std::uint64_t build_count(const std::string& kernel_name, const std::string& device_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = build_counts_.find(Key{kernel_name, device_id});
    return it == build_counts_.end() ? 0 : it->second;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  using Key = std::pair<std::string, std::string>;
  mutable std::mutex mutex_;
  std::map<Key, ProgramHandle> entries_;
  std::map<Key, std::uint64_t> build_counts_;
  std::uint64_t next_build_id_ = 0;
};

inline ProgramHandle provision_program(ProgramCache& cache, const KernelRegistry& registry,
                                       const DeviceDescriptor& device,
                                       const std::string& kernel_name, Provisioning mode) {
  return cache.provision(registry, device, kernel_name, mode);
}

// ---------------------------------------------------------------------------
// Executors
// ---------------------------------------------------------------------------

/// Ascending gid order; a failing work-item reports its gid.
class HostSequentialExecutor : public KernelExecutor {
 public:
  std::string_view kind() const override { return "host-seq"; }

  void execute(KernelContext& ctx, const std::function<void(std::size_t)>& run_item) override {
    note_launch(ctx);
    const std::size_t n = ctx.range().global_size;
    for (std::size_t gid = 0; gid < n; ++gid) {
      try {
        run_item(gid);
      } catch (const std::exception& e) {
        throw KernelPanic("run", "gid " + std::to_string(gid) + ": " + e.what());
      }
    }
  }
};

/// Up to `width` work-item threads with strided gid interleaving.
class HostParallelExecutor : public KernelExecutor {
 public:
  explicit HostParallelExecutor(std::uint32_t width) : width_(std::max(1u, width)) {}

  std::string_view kind() const override { return "host-par"; }

  void execute(KernelContext& ctx, const std::function<void(std::size_t)>& run_item) override {
    note_launch(ctx);
    const std::size_t n = ctx.range().global_size;
    const std::size_t threads = std::min<std::size_t>(width_, n);
    if (threads <= 1) {
      for (std::size_t gid = 0; gid < n; ++gid) run_item(gid);
      return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t gid = t; gid < n; gid += threads) run_item(gid);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) {
      try {
        std::rethrow_exception(first_error);
      } catch (const std::exception& e) {
        throw KernelPanic("run", e.what());
      }
    }
  }

 private:
  std::uint32_t width_;
};

/// Host-run stand-in for an offload device: executes work-items in batches
/// of the cost-model width, last batch first, and charges the modeled
/// transfer and compute time to the metrics instead of sleeping.
class SimulatedAcceleratorExecutor : public KernelExecutor {
 public:
  explicit SimulatedAcceleratorExecutor(CostModel cost) : cost_(cost) {}

  std::string_view kind() const override { return "sim-acc"; }

  void execute(KernelContext& ctx, const std::function<void(std::size_t)>& run_item) override {
    note_launch(ctx);
    const std::size_t n = ctx.range().global_size;
    const std::size_t width = std::max<std::uint32_t>(1, cost_.width);
    const std::size_t batches = (n + width - 1) / width;
    for (std::size_t b = batches; b-- > 0;) {
      const std::size_t begin = b * width;
      const std::size_t end = std::min(n, begin + width);
      for (std::size_t gid = begin; gid < end; ++gid) {
        try {
          run_item(gid);
        } catch (const std::exception& e) {
          throw KernelPanic("run", "gid " + std::to_string(gid) + ": " + e.what());
        }
      }
    }
    ctx.metrics().simulated_ns += estimate_offload_ns(cost_, n, ctx.buffer_bytes());
  }

 private:
  CostModel cost_;
};

inline std::unique_ptr<KernelExecutor> make_executor(const DeviceDescriptor& device) {
  switch (device.device_type) {
    case ExecutionMode::CPU: return std::make_unique<HostSequentialExecutor>();
    case ExecutionMode::JTP: return std::make_unique<HostParallelExecutor>(device.parallel_width);
    case ExecutionMode::GPU:
    case ExecutionMode::ACC: return std::make_unique<SimulatedAcceleratorExecutor>(device.cost);
  }
  return std::make_unique<HostSequentialExecutor>();
}

namespace detail {

template <class Kernel>
ExecMetrics execute_on_device_impl(const DeviceDescriptor& device, const ProgramHandle& program,
                                   Kernel& kernel, KernelContext& ctx) {
  if (program.device_id != device.device_id) {
    throw Error("program was provisioned for device " + program.device_id + ", not " +
                device.device_id);
  }
  if (!ctx.device_execution()) throw Error("device execution was declined for this context");
  if (!ctx.range_set()) throw Error("range not set");
  auto executor = make_executor(device);
  ctx.advance_phase(KernelContext::Phase::Run);
  executor->execute(ctx, [&](std::size_t gid) { kernel.run(ctx, gid); });
  return ctx.metrics();
}

}  // namespace detail

/// Runs the run() phase of an already-prepared context on `device`.
inline ExecMetrics execute_on_device(const DeviceDescriptor& device, const ProgramHandle& program,
                                     UnaryKernel& kernel, KernelContext& ctx) {
  return detail::execute_on_device_impl(device, program, kernel, ctx);
}

inline ExecMetrics execute_on_device(const DeviceDescriptor& device, const ProgramHandle& program,
                                     BinaryKernel& kernel, KernelContext& ctx) {
  return detail::execute_on_device_impl(device, program, kernel, ctx);
}

}  // namespace ucores

#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ucores/device.hpp"
#include "ucores/element.hpp"
#include "ucores/errors.hpp"
#include "ucores/task.hpp"

namespace ucores {

// ---------------------------------------------------------------------------
// Frame layout (all integers big-endian):
//
//   [length u32] [version u8 = 1] [msg_type u8] [payload: length-2 bytes]
//
// length counts the bytes after the length field. Payloads are a sequence
// of tagged fields, each [tag u8][value]; tags run 1..N in declaration
// order per message. Value encodings:
//
//   u8/u32/u64      fixed-width big-endian
//   i64             two's complement in a u64
//   f32/f64         IEEE bit pattern in a u32/u64
//   string/bytes    [u32 length][raw bytes]
//   element         [u8 kind][u32 count][payload]; array entries are
//                   fixed-width big-endian, table rows are
//                   [u32 keylen][key][u64 count]
//   optional mode   u8: 0 = absent, otherwise the ExecutionMode value
//
// The layout is frozen by golden-bytes tests; changing it requires a
// version bump. Frames above 64 MiB are rejected on both sides.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 64ull * 1024 * 1024;

enum class MsgType : std::uint8_t {
  Register = 1,
  RegisterAck = 2,
  Heartbeat = 3,
  SubmitTask = 4,
  TaskResult = 5,
  TaskError = 6,
  Shutdown = 7,
};

/// Flat device description carried in a registration, kept independent of
/// DeviceDescriptor so the wire form stays stable.
struct DeviceSummary {
  ImplKind impl = ImplKind::STD;
  std::string arch;
  ExecutionMode device_type = ExecutionMode::CPU;
  std::uint32_t width = 1;

  bool operator==(const DeviceSummary&) const = default;
};

inline DeviceSummary summarize(ImplKind impl, const std::string& arch,
                               const DeviceDescriptor& dev) {
  return DeviceSummary{impl, arch, dev.device_type, dev.parallel_width};
}

/// Registration record a worker presents to the driver.
struct WorkerCapabilities {
  std::string worker_id;
  std::uint32_t cores = 1;
  DeviceSummary device;
  std::uint64_t registry_hash = 0;

  bool operator==(const WorkerCapabilities&) const = default;
};

struct RegisterMsg {
  WorkerCapabilities caps;
  bool operator==(const RegisterMsg&) const = default;
};
struct RegisterAckMsg {
  bool accepted = false;
  std::string reason;
  bool operator==(const RegisterAckMsg&) const = default;
};
struct HeartbeatMsg {
  std::string worker_id;
  std::uint64_t seq = 0;
  bool operator==(const HeartbeatMsg&) const = default;
};
struct SubmitTaskMsg {
  Task task;
  bool operator==(const SubmitTaskMsg&) const = default;
};
struct TaskResultMsg {
  TaskResult result;
  bool operator==(const TaskResultMsg&) const = default;
};
struct TaskErrorMsg {
  std::uint64_t job_id = 0;
  std::uint64_t task_id = 0;
  std::string phase;
  std::string detail;
  bool operator==(const TaskErrorMsg&) const = default;
};
struct ShutdownMsg {
  bool operator==(const ShutdownMsg&) const = default;
};

using Message = std::variant<RegisterMsg, RegisterAckMsg, HeartbeatMsg, SubmitTaskMsg,
                             TaskResultMsg, TaskErrorMsg, ShutdownMsg>;

namespace wire {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 24));
    out_.push_back(static_cast<std::uint8_t>(v >> 16));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(std::span<const std::uint8_t> bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void tag(std::uint8_t t) { u8(t); }

  std::vector<std::uint8_t> take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = (std::uint32_t(data_[pos_]) << 24) | (std::uint32_t(data_[pos_ + 1]) << 16) |
                      (std::uint32_t(data_[pos_ + 2]) << 8) | std::uint32_t(data_[pos_ + 3]);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_tag(std::uint8_t t, const char* field) {
    if (u8() != t) throw PayloadDecodeError(std::string("unexpected tag for field ") + field);
  }
  bool done() const { return pos_ == data_.size(); }
  void expect_done() const {
    if (!done()) throw PayloadDecodeError("trailing bytes in payload");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw PayloadDecodeError("payload truncated");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

template <class T, class Cast>
void write_array(Writer& w, std::span<const T> values, Cast cast) {
  w.u32(static_cast<std::uint32_t>(values.size()));
  for (const T& v : values) {
    if constexpr (sizeof(T) == 4) w.u32(cast(v));
    else w.u64(cast(v));
  }
}

inline void write_element(Writer& w, const Element& e) {
  w.u8(static_cast<std::uint8_t>(e.kind()));
  switch (e.kind()) {
    case ElementKind::F32Array: {
      write_array(w, e.as_f32(), [](float v) {
        std::uint32_t b;
        std::memcpy(&b, &v, 4);
        return b;
      });
      break;
    }
    case ElementKind::F64Array: {
      write_array(w, e.as_f64(), [](double v) {
        std::uint64_t b;
        std::memcpy(&b, &v, 8);
        return b;
      });
      break;
    }
    case ElementKind::I32Array:
      write_array(w, e.as_i32(), [](std::int32_t v) { return static_cast<std::uint32_t>(v); });
      break;
    case ElementKind::I64Array:
      write_array(w, e.as_i64(), [](std::int64_t v) { return static_cast<std::uint64_t>(v); });
      break;
    case ElementKind::ByteArray: {
      auto bytes = e.as_bytes();
      w.u32(static_cast<std::uint32_t>(bytes.size()));
      w.raw(bytes);
      break;
    }
    case ElementKind::KeyCountTable: {
      const auto& table = e.as_table();
      w.u32(static_cast<std::uint32_t>(table.size()));
      for (const auto& [key, count] : table) {
        w.str(key);
        w.u64(count);
      }
      break;
    }
  }
}

inline Element read_element(Reader& r) {
  const std::uint8_t kind = r.u8();
  const std::uint32_t count = r.u32();
  switch (static_cast<ElementKind>(kind)) {
    case ElementKind::F32Array: {
      std::vector<float> v(count);
      for (auto& x : v) {
        std::uint32_t b = r.u32();
        std::memcpy(&x, &b, 4);
      }
      return Element::f32(std::move(v));
    }
    case ElementKind::F64Array: {
      std::vector<double> v(count);
      for (auto& x : v) {
        std::uint64_t b = r.u64();
        std::memcpy(&x, &b, 8);
      }
      return Element::f64(std::move(v));
    }
    case ElementKind::I32Array: {
      std::vector<std::int32_t> v(count);
      for (auto& x : v) x = static_cast<std::int32_t>(r.u32());
      return Element::i32(std::move(v));
    }
    case ElementKind::I64Array: {
      std::vector<std::int64_t> v(count);
      for (auto& x : v) x = static_cast<std::int64_t>(r.u64());
      return Element::i64(std::move(v));
    }
    case ElementKind::ByteArray: {
      auto s = r.raw(count);
      return Element::bytes(std::vector<std::uint8_t>(s.begin(), s.end()));
    }
    case ElementKind::KeyCountTable: {
      Element::Table t;
      t.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        std::string key = r.str();
        std::uint64_t n = r.u64();
        t.emplace_back(std::move(key), n);
      }
      try {
        return Element::table(std::move(t));
      } catch (const Error& e) {
        throw PayloadDecodeError(e.what());
      }
    }
    default: throw PayloadDecodeError("unknown element kind " + std::to_string(kind));
  }
}

inline void write_mode_opt(Writer& w, std::optional<ExecutionMode> m) {
  w.u8(m ? static_cast<std::uint8_t>(*m) : 0);
}

inline std::optional<ExecutionMode> read_mode_opt(Reader& r) {
  const std::uint8_t v = r.u8();
  if (v == 0) return std::nullopt;
  if (v < 1 || v > 4) throw PayloadDecodeError("bad execution mode " + std::to_string(v));
  return static_cast<ExecutionMode>(v);
}

inline ExecutionMode read_mode(Reader& r) {
  auto m = read_mode_opt(r);
  if (!m) throw PayloadDecodeError("execution mode may not be absent here");
  return *m;
}

}  // namespace wire

namespace detail {

inline void encode_payload(wire::Writer& w, const RegisterMsg& m) {
  w.tag(1); w.str(m.caps.worker_id);
  w.tag(2); w.u32(m.caps.cores);
  w.tag(3); w.u8(static_cast<std::uint8_t>(m.caps.device.impl));
  w.tag(4); w.str(m.caps.device.arch);
  w.tag(5); w.u8(static_cast<std::uint8_t>(m.caps.device.device_type));
  w.tag(6); w.u32(m.caps.device.width);
  w.tag(7); w.u64(m.caps.registry_hash);
}

inline void encode_payload(wire::Writer& w, const RegisterAckMsg& m) {
  w.tag(1); w.u8(m.accepted ? 1 : 0);
  w.tag(2); w.str(m.reason);
}

inline void encode_payload(wire::Writer& w, const HeartbeatMsg& m) {
  w.tag(1); w.str(m.worker_id);
  w.tag(2); w.u64(m.seq);
}

inline void encode_payload(wire::Writer& w, const SubmitTaskMsg& m) {
  const Task& t = m.task;
  w.tag(1); w.u64(t.job_id);
  w.tag(2); w.u64(t.task_id);
  w.tag(3); w.u8(static_cast<std::uint8_t>(t.kind));
  w.tag(4); w.str(t.kernel_name);
  w.tag(5); wire::write_mode_opt(w, t.mode_hint);
  w.tag(6);
  w.u8(static_cast<std::uint8_t>(t.inputs.size()));
  for (const Element& e : t.inputs) wire::write_element(w, e);
  w.tag(7);
  w.u32(static_cast<std::uint32_t>(t.partition_payload.size()));
  for (const Element& e : t.partition_payload) wire::write_element(w, e);
}

inline void encode_payload(wire::Writer& w, const TaskResultMsg& m) {
  const TaskResult& r = m.result;
  w.tag(1); w.u64(r.job_id);
  w.tag(2); w.u64(r.task_id);
  w.tag(3); wire::write_element(w, r.output);
  w.tag(4); w.u64(r.metrics.items);
  w.tag(5); w.u64(r.metrics.bytes_moved);
  w.tag(6); w.u64(r.metrics.simulated_ns);
  w.tag(7); w.str(r.metrics.executor_kind);
  w.tag(8); w.u64(r.metrics.device_invocations);
  w.tag(9); w.str(r.worker_id);
}

inline void encode_payload(wire::Writer& w, const TaskErrorMsg& m) {
  w.tag(1); w.u64(m.job_id);
  w.tag(2); w.u64(m.task_id);
  w.tag(3); w.str(m.phase);
  w.tag(4); w.str(m.detail);
}

inline void encode_payload(wire::Writer&, const ShutdownMsg&) {}

}  // namespace detail

inline MsgType message_type(const Message& m) {
  return static_cast<MsgType>(m.index() + 1);
}

/// Serializes a message into one length-prefixed frame.
inline std::vector<std::uint8_t> encode_frame(const Message& m) {
  wire::Writer payload;
  std::visit([&](const auto& msg) { detail::encode_payload(payload, msg); }, m);
  std::vector<std::uint8_t> body = payload.take();
  const std::size_t length = 2 + body.size();
  if (4 + length > kMaxFrameBytes) {
    throw ProtocolError("frame exceeds the 64 MiB limit: " + std::to_string(4 + length));
  }
  wire::Writer frame;
  frame.u32(static_cast<std::uint32_t>(length));
  frame.u8(kWireVersion);
  frame.u8(static_cast<std::uint8_t>(message_type(m)));
  frame.raw(body);
  return frame.take();
}

/// Decodes exactly one complete frame.
inline Message decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FrameTooShort("frame shorter than its length field");
  wire::Reader header(bytes);
  const std::uint32_t length = header.u32();
  if (length < 2) throw FrameTooShort("frame length " + std::to_string(length) + " < 2");
  if (4ull + length > kMaxFrameBytes) {
    throw ProtocolError("frame exceeds the 64 MiB limit: " + std::to_string(4ull + length));
  }
  if (bytes.size() != 4ull + length) {
    if (bytes.size() < 4ull + length) throw FrameTooShort("frame truncated");
    throw PayloadDecodeError("trailing bytes after frame");
  }
  const std::uint8_t version = header.u8();
  if (version != kWireVersion) {
    throw UnknownVersion("unsupported wire version " + std::to_string(version));
  }
  const std::uint8_t type = header.u8();
  wire::Reader r(bytes.subspan(6));

  switch (static_cast<MsgType>(type)) {
    case MsgType::Register: {
      RegisterMsg m;
      r.expect_tag(1, "worker_id"); m.caps.worker_id = r.str();
      r.expect_tag(2, "cores"); m.caps.cores = r.u32();
      r.expect_tag(3, "impl"); {
        const std::uint8_t impl = r.u8();
        if (impl != 1 && impl != 2) throw PayloadDecodeError("bad impl kind");
        m.caps.device.impl = static_cast<ImplKind>(impl);
      }
      r.expect_tag(4, "arch"); m.caps.device.arch = r.str();
      r.expect_tag(5, "device_type"); m.caps.device.device_type = wire::read_mode(r);
      r.expect_tag(6, "width"); m.caps.device.width = r.u32();
      r.expect_tag(7, "registry_hash"); m.caps.registry_hash = r.u64();
      r.expect_done();
      return m;
    }
    case MsgType::RegisterAck: {
      RegisterAckMsg m;
      r.expect_tag(1, "accepted"); m.accepted = r.u8() != 0;
      r.expect_tag(2, "reason"); m.reason = r.str();
      r.expect_done();
      return m;
    }
    case MsgType::Heartbeat: {
      HeartbeatMsg m;
      r.expect_tag(1, "worker_id"); m.worker_id = r.str();
      r.expect_tag(2, "seq"); m.seq = r.u64();
      r.expect_done();
      return m;
    }
    case MsgType::SubmitTask: {
      SubmitTaskMsg m;
      Task& t = m.task;
      r.expect_tag(1, "job_id"); t.job_id = r.u64();
      r.expect_tag(2, "task_id"); t.task_id = r.u64();
      r.expect_tag(3, "kind"); {
        const std::uint8_t k = r.u8();
        if (k < 1 || k > 3) throw PayloadDecodeError("bad task kind " + std::to_string(k));
        t.kind = static_cast<TaskKind>(k);
      }
      r.expect_tag(4, "kernel_name"); t.kernel_name = r.str();
      r.expect_tag(5, "mode_hint"); t.mode_hint = wire::read_mode_opt(r);
      r.expect_tag(6, "inputs"); {
        const std::uint8_t n = r.u8();
        if (n > 2) throw PayloadDecodeError("task carries more than 2 inputs");
        for (std::uint8_t i = 0; i < n; ++i) t.inputs.push_back(wire::read_element(r));
      }
      r.expect_tag(7, "partition_payload"); {
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) t.partition_payload.push_back(wire::read_element(r));
      }
      r.expect_done();
      return m;
    }
    case MsgType::TaskResult: {
      TaskResultMsg m;
      TaskResult& res = m.result;
      r.expect_tag(1, "job_id"); res.job_id = r.u64();
      r.expect_tag(2, "task_id"); res.task_id = r.u64();
      r.expect_tag(3, "output"); res.output = wire::read_element(r);
      r.expect_tag(4, "items"); res.metrics.items = r.u64();
      r.expect_tag(5, "bytes_moved"); res.metrics.bytes_moved = r.u64();
      r.expect_tag(6, "simulated_ns"); res.metrics.simulated_ns = r.u64();
      r.expect_tag(7, "executor_kind"); res.metrics.executor_kind = r.str();
      r.expect_tag(8, "device_invocations"); res.metrics.device_invocations = r.u64();
      r.expect_tag(9, "worker_id"); res.worker_id = r.str();
      r.expect_done();
      return m;
    }
    case MsgType::TaskError: {
      TaskErrorMsg m;
      r.expect_tag(1, "job_id"); m.job_id = r.u64();
      r.expect_tag(2, "task_id"); m.task_id = r.u64();
      r.expect_tag(3, "phase"); m.phase = r.str();
      r.expect_tag(4, "detail"); m.detail = r.str();
      r.expect_done();
      return m;
    }
    case MsgType::Shutdown: {
      r.expect_done();
      return ShutdownMsg{};
    }
    default: throw UnknownMsgType("unknown message type " + std::to_string(type));
  }
}

/// Incremental framing for stream transports: extracts one frame from the
/// head of `buffer` if complete, consuming its bytes.
inline std::optional<Message> try_extract_frame(std::vector<std::uint8_t>& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  wire::Reader r(buffer);
  const std::uint32_t length = r.u32();
  if (length < 2) throw FrameTooShort("frame length " + std::to_string(length) + " < 2");
  if (4ull + length > kMaxFrameBytes) {
    throw ProtocolError("frame exceeds the 64 MiB limit");
  }
  if (buffer.size() < 4ull + length) return std::nullopt;
  Message m = decode_frame(std::span<const std::uint8_t>(buffer.data(), 4 + length));
  buffer.erase(buffer.begin(), buffer.begin() + 4 + length);
  return m;
}

}  // namespace ucores

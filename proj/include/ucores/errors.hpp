#pragma once

#include <stdexcept>
#include <string>

namespace ucores {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- dataset ----
class InvalidPartitionCount : public Error {
 public:
  using Error::Error;
};
class InvalidChunkSize : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class ElementKindError : public Error {
 public:
  using Error::Error;
};
class MixedElementVariants : public Error {
 public:
  using Error::Error;
};

// ---- kernel ----
class DuplicateKernelName : public Error {
 public:
  using Error::Error;
};
class UnknownKernel : public Error {
 public:
  using Error::Error;
};
class ArityMismatch : public Error {
 public:
  using Error::Error;
};
class RangeAlreadySet : public Error {
 public:
  using Error::Error;
};

// Wraps any failure inside a kernel phase; carries the phase name.
class KernelPanic : public Error {
 public:
  KernelPanic(std::string phase, const std::string& detail)
      : Error("kernel panic in " + phase + ": " + detail), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

// ---- device ----
class InventoryParseError : public Error {
 public:
  using Error::Error;
};
class NoMatchingDevice : public Error {
 public:
  using Error::Error;
};
class UnsupportedProvisioning : public Error {
 public:
  using Error::Error;
};

// ---- engine / cluster ----
class EmptyDataset : public Error {
 public:
  using Error::Error;
};
class JobFailed : public Error {
 public:
  using Error::Error;
};

// ---- wire protocol ----
class ProtocolError : public Error {
 public:
  using Error::Error;
};
class FrameTooShort : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class UnknownVersion : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class UnknownMsgType : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class PayloadDecodeError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// ---- demos ----
class LengthMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace ucores

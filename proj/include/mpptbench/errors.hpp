#pragma once

#include <stdexcept>
#include <string>

namespace mpptbench {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// pv-device
class DegenerateParams : public Error { using Error::Error; };
class NoConvergence : public Error { using Error::Error; };
class CalibrationFailure : public Error { using Error::Error; };

// array-topology
class OutOfRange : public Error { using Error::Error; };
class UnknownScenario : public Error { using Error::Error; };

// converter
class GainUndefined : public Error { using Error::Error; };
class NonActuatable : public Error { using Error::Error; };
class UnknownTopology : public Error { using Error::Error; };

// scenarios / IO
class ParseError : public Error { using Error::Error; };
class NonMonotoneTime : public Error { using Error::Error; };
class NegativeIrradiance : public Error { using Error::Error; };

// metrics
class EmptyLog : public Error { using Error::Error; };
class AllDark : public Error { using Error::Error; };
class EventOutOfRange : public Error { using Error::Error; };
class WindowInvalid : public Error { using Error::Error; };

// costing
class UnknownOpKind : public Error { using Error::Error; };
class UnknownAlgorithm : public Error { using Error::Error; };

}  // namespace mpptbench

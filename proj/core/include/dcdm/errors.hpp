// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dcdm {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid build-time/setup parameters (dimensions, schedules, hyperparameters).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Invalid runtime argument values (out-of-range timestep, bad DRF, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Malformed on-disk container or checkpoint data.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (frozen weights, ...).
class StateError : public Error {
public:
  using Error::Error;
};

/// Tensor shapes do not line up between connected network stages.
class WiringError : public Error {
public:
  using Error::Error;
};

/// Non-finite values or diverging iterations.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Dose-level routing could not resolve a bank entry.
class RoutingError : public Error {
public:
  using Error::Error;
};

}  // namespace dcdm

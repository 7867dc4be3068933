// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>

namespace sp3d {

/// Base exception for all contract violations raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed or unknown configuration entries (CLI exit code 2).
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace sp3d

/*
 * Copyright (c) The edgeguard authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace edgeguard {

// Base for every error raised by the library. Datapath and parsing never
// throw; these cover contract breaches at API boundaries and I/O.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user-supplied value such as an IP string or scenario field.
class InputError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (odd checksum length, oversize payload).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// File content does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

} // namespace edgeguard

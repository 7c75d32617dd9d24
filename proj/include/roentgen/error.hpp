// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace roentgen {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not conform for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain (zero stride, k > n, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A weight tensor referenced by a layer is missing or mis-shaped.
class LookupError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed bytes: bad magic, bad PGM header, short payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A structurally valid file whose records are truncated or inconsistent.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A classifier failed on one image during a confirmatory trial.
class TrialError : public Error {
 public:
  TrialError(std::string image_id, const std::string& what)
      : Error("trial failed on image '" + image_id + "': " + what),
        image_id_(std::move(image_id)) {}

  const std::string& image_id() const noexcept { return image_id_; }

 private:
  std::string image_id_;
};

}  // namespace roentgen

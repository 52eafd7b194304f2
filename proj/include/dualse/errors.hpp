/*
Copyright 2026 The dualse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace dualse {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, channel counts, sample rates or arguments violate a precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but carries no usable information (e.g. digital silence).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A solver hit a singular or non-finite state it could not regularize away.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Weight file or other serialized data is malformed or inconsistent.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Physically inconsistent simulation parameters.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling could not satisfy its constraints.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualse

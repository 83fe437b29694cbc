/*
 * Copyright 2026 The CNNEELM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace cnneelm {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors caused by bad user input (files, flags, shapes supplied from
// outside). The CLI maps these to exit code 2; everything else is 1.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class ParameterError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class LabelError : public InputError {
 public:
  using InputError::InputError;
};

// Malformed CSV row; carries the 1-based line number.
class RowError : public InputError {
 public:
  RowError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Model file problems. Each failure mode has its own type so callers and
// tests can tell them apart.
class ModelFormatError : public InputError {
 public:
  using InputError::InputError;
};
class VersionError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class MissingFieldError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class ShapeError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class NonFiniteError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

// Training diverged (non-finite loss or gradient).
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace cnneelm

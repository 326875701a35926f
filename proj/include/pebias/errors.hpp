/*
 * Copyright 2026 The pebias Authors.
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

// Exception types thrown across the library. Every error derives from
// pebias::Error so callers that only need a message can catch one type.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pebias {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class MissingTopicError : public Error {
 public:
  explicit MissingTopicError(const std::string& item)
      : Error("item has no topic assignment: " + item), item_(item) {}
  const std::string& item() const { return item_; }

 private:
  std::string item_;
};

class MissingPropensity : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, double learning_rate)
      : Error("training diverged (non-finite loss) at epoch " +
              std::to_string(epoch) + " with learning rate " +
              std::to_string(learning_rate)),
        epoch_(epoch),
        learning_rate_(learning_rate) {}
  int epoch() const { return epoch_; }
  double learning_rate() const { return learning_rate_; }

 private:
  int epoch_;
  double learning_rate_;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class DegenerateLabels : public Error {
 public:
  using Error::Error;
};

class NoRankableUsers : public Error {
 public:
  using Error::Error;
};

}  // namespace pebias

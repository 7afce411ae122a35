#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffattack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

// Invalid combination of attack settings, access levels or task kinds.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed model file, manifest, or remote payload.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Remote endpoint unreachable, timed out or answered 5xx on every attempt.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// An oracle failure that aborted a hill-climbing run.
class AttackError : public Error {
 public:
  AttackError(std::size_t iteration, const std::string& cause)
      : Error("attack aborted at iteration " + std::to_string(iteration) + ": " + cause),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace diffattack

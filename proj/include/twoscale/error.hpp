#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twoscale {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values: shape mismatches, out-of-range indices, non-finite inputs.
struct InvalidInput : Error {
  using Error::Error;
};

// Operation applied to an object in the wrong state (e.g. a stale forward cache).
struct InvalidState : Error {
  using Error::Error;
};

// Structurally impossible network or experiment configuration.
struct InvalidConfig : Error {
  using Error::Error;
};

// A parameterized layer is all-zero, so the parameter scale R would vanish
// and the normalized parameters would be undefined.
struct DegenerateScale : Error {
  using Error::Error;
};

// A documented precondition was broken by the caller.
struct ContractViolation : Error {
  using Error::Error;
};

// Malformed dataset file; the message names the offending byte offset.
struct ParseError : Error {
  using Error::Error;
};

// Training aborted on a non-finite loss or gradient.
struct RunDiverged : Error {
  RunDiverged(std::size_t iteration_, double loss_, double r1_, double r2_)
      : Error("run diverged at iteration " + std::to_string(iteration_) +
              ": loss=" + std::to_string(loss_) + ", r1=" + std::to_string(r1_) +
              ", r2=" + std::to_string(r2_)),
        iteration(iteration_),
        loss(loss_),
        r1(r1_),
        r2(r2_) {}

  std::size_t iteration;
  double loss;
  double r1;
  double r2;
};

}  // namespace twoscale

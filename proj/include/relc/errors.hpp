#pragma once

#include <stdexcept>
#include <string>

namespace relc {

// Error taxonomy. CLI maps ConfigError to exit code 2, everything else to 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An operation would order two events that are not causally orderable
// (non-spacelike surface, advance past a neighbour's light cone, ...).
struct CausalityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An operation ran off the lattice edge (advance past T, empty clipped cone
// where a kernel is required, ...).
struct BoundaryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A step was applied at a cell that is not the next advance of the state's
// surface.
struct SequencingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A guard tripped: Fock dimension, occupancy vs cutoff, plateau validity.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A quantity is undefined for the given state (e.g. a collapse-time scale
// for branches whose images never disagree).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace relc

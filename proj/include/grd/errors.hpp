#pragma once

#include <stdexcept>
#include <string>

namespace grd {

/// Error hierarchy shared by all modules. Every failure mode that callers
/// can act on gets its own type; everything derives from std::runtime_error
/// so the CLI can map any of them to a nonzero exit code.

struct InvalidConfig : std::runtime_error {
    explicit InvalidConfig(const std::string& msg) : std::runtime_error("invalid config: " + msg) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& msg) : std::runtime_error("dimension mismatch: " + msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error("shape mismatch: " + msg) {}
};

struct InvalidHeads : std::runtime_error {
    explicit InvalidHeads(const std::string& msg) : std::runtime_error("invalid head count: " + msg) {}
};

struct SingularMass : std::runtime_error {
    explicit SingularMass(const std::string& msg) : std::runtime_error("singular mass matrix: " + msg) {}
};

struct NonFiniteState : std::runtime_error {
    explicit NonFiniteState(const std::string& msg) : std::runtime_error("non-finite state: " + msg) {}
};

struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& msg) : std::runtime_error("non-finite loss: " + msg) {}
};

struct RejectionOverflow : std::runtime_error {
    explicit RejectionOverflow(const std::string& msg) : std::runtime_error("rejection overflow: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& msg) : std::runtime_error("empty dataset: " + msg) {}
};

}  // namespace grd

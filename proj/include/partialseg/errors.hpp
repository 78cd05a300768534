#pragma once

#include <stdexcept>
#include <string>

namespace partialseg {

// Base type for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidIndex : Error {
    explicit InvalidIndex(const std::string& what) : Error(what) {}
};

struct EmptyKeptSet : Error {
    explicit EmptyKeptSet(const std::string& what) : Error(what) {}
};

// A mask pixel carries a label no partition group covers.
struct UnlabeledIndex : Error {
    explicit UnlabeledIndex(const std::string& what) : Error(what) {}
};

// Probabilities/targets tagged with a different label space than the operation expects.
struct SpaceMismatch : Error {
    explicit SpaceMismatch(const std::string& what) : Error(what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

struct NonFiniteInput : Error {
    explicit NonFiniteInput(const std::string& what) : Error(what) {}
};

struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

struct CorruptFile : Error {
    explicit CorruptFile(const std::string& what) : Error(what) {}
};

struct VersionMismatch : Error {
    explicit VersionMismatch(const std::string& what) : Error(what) {}
};

struct RejectionLimitExceeded : Error {
    explicit RejectionLimitExceeded(const std::string& what) : Error(what) {}
};

struct DivergedLoss : Error {
    explicit DivergedLoss(const std::string& what) : Error(what) {}
};

struct NoForegroundAvailable : Error {
    explicit NoForegroundAvailable(const std::string& what) : Error(what) {}
};

struct MissingCheckpoint : Error {
    explicit MissingCheckpoint(const std::string& what) : Error(what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace partialseg

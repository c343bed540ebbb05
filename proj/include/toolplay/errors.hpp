#pragma once

#include <stdexcept>
#include <string>

namespace toolplay {

struct FrameMismatch : std::runtime_error {
    explicit FrameMismatch(const std::string& msg) : std::runtime_error(msg) {}
};
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DegenerateConfiguration : std::runtime_error {
    explicit DegenerateConfiguration(const std::string& msg) : std::runtime_error(msg) {}
};
struct AlignmentFailure : std::runtime_error {
    explicit AlignmentFailure(const std::string& msg) : std::runtime_error(msg) {}
};
struct InsufficientOverlap : std::runtime_error {
    explicit InsufficientOverlap(const std::string& msg) : std::runtime_error(msg) {}
};
struct PlanFailure : std::runtime_error {
    explicit PlanFailure(const std::string& msg) : std::runtime_error(msg) {}
};
struct MissingPlate : std::runtime_error {
    explicit MissingPlate(const std::string& msg) : std::runtime_error(msg) {}
};
struct TooFewVisiblePoints : std::runtime_error {
    explicit TooFewVisiblePoints(const std::string& msg) : std::runtime_error(msg) {}
};
struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& msg) : std::runtime_error(msg) {}
};
struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& msg) : std::runtime_error(msg) {}
};
struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};
struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& msg) : std::runtime_error(msg) {}
};
struct MissingCheckpoint : std::runtime_error {
    explicit MissingCheckpoint(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace toolplay

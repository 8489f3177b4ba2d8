#pragma once

#include <stdexcept>
#include <string>

namespace acnn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

// Covariance of a neighborhood has no unique smallest eigenvector
// (rank < 2, e.g. collinear points).
struct DegenerateNeighborhood : Error {
    using Error::Error;
};

struct NormalsRequired : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& msg, int line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    int line_number;
};

struct TrainingDiverged : Error {
    TrainingDiverged(const std::string& msg, int epoch, int batch)
        : Error(msg + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
          epoch(epoch),
          batch(batch) {}
    int epoch;
    int batch;
};

struct ConfigMismatch : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace acnn

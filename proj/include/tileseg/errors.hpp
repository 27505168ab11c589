#pragma once

#include <stdexcept>
#include <string>

namespace tileseg {

// Base for everything thrown on purpose.  The CLI maps subtypes to exit codes;
// library code just throws the most specific one.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated payload, NaN where forbidden).
struct FormatError : Error {
    using Error::Error;
};

// Weight container problems: unknown layer name, shape mismatch, bad record.
struct WeightsError : FormatError {
    using FormatError::FormatError;
};

// Network description text that does not parse or violates graph rules.
// line <= 0 means the problem is not tied to a single line.
struct SpecError : FormatError {
    SpecError(int line, const std::string& what)
        : FormatError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line(line) {}
    int line;
};

// Size arithmetic went wrong: non-integral strides, output underflow, shifts
// that do not fit the image, context that is not available.
struct GeometryError : Error {
    using Error::Error;
};

// A tile/patch combination that cannot be planned.
struct PlanError : GeometryError {
    using GeometryError::GeometryError;
};

// Raster operands whose dimensions disagree.
struct ShapeError : GeometryError {
    using GeometryError::GeometryError;
};

// Window read outside the raster under BorderPolicy::Error.
struct OutOfBounds : GeometryError {
    using GeometryError::GeometryError;
};

// Reflect padding asked to mirror further than the raster extent.
struct UnsupportedReflect : GeometryError {
    using GeometryError::GeometryError;
};

// An output pixel ended up with zero accumulated weight.
struct CoverageError : Error {
    using Error::Error;
};

}  // namespace tileseg

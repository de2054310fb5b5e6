#ifndef MONOATTR_CORE_ERROR_HPP
#define MONOATTR_CORE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace monoattr {

/** Base class for every error raised by this library. */
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/** Incompatible tensor shapes or index out of range. */
struct DimensionError : Error {
    using Error::Error;
};

/** An operation produced a non-finite value; the message names the op. */
struct NumericError : Error {
    using Error::Error;
};

/** A precondition of an API contract was violated by the caller. */
struct ContractError : Error {
    using Error::Error;
};

/** Invalid configuration value (step counts, weights, thresholds...). */
struct ConfigError : Error {
    using Error::Error;
};

/** Malformed external input; message carries the line/row when known. */
struct ParseError : Error {
    using Error::Error;
};

/** Well-formed input with invalid content (unknown tags, bad ranges). */
struct ValidationError : Error {
    using Error::Error;
};

/** Training diverged or could not proceed. */
struct TrainingError : Error {
    using Error::Error;
};

/** Problem size outside the supported range of an exact algorithm. */
struct ScaleError : Error {
    using Error::Error;
};

/** A metric is undefined on the given input (e.g. all-zero vector). */
struct UndefinedMetricError : Error {
    using Error::Error;
};

/** No perturbation in the sampled neighborhood kept the prediction. */
struct EmptyNeighborhoodError : Error {
    using Error::Error;
};

/** A statistical test has no distribution on this input. */
struct DegenerateTestError : Error {
    using Error::Error;
};

}  // namespace monoattr

#endif

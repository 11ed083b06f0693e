#pragma once

#include <stdexcept>
#include <string>

namespace pocadapt {

// Base for all engine errors; each module defines narrow subtypes so
// callers can catch precisely what they can handle.
struct EngineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedRecord : EngineError { using EngineError::EngineError; };
struct UnsupportedSchema : EngineError { using EngineError::EngineError; };

struct InvalidHypothesis : EngineError { using EngineError::EngineError; };
struct ExecutorUnavailable : EngineError { using EngineError::EngineError; };
struct PlanMismatch : EngineError { using EngineError::EngineError; };
struct JudgeUnavailable : EngineError { using EngineError::EngineError; };
struct UnknownCategory : EngineError { using EngineError::EngineError; };

struct OutOfVocabulary : EngineError { using EngineError::EngineError; };

struct UnreadableFile : EngineError { using EngineError::EngineError; };
struct EmptyLog : EngineError { using EngineError::EngineError; };
struct TooFewCVEs : EngineError { using EngineError::EngineError; };
struct InsufficientData : EngineError { using EngineError::EngineError; };

struct DimensionMismatch : EngineError { using EngineError::EngineError; };
struct EmptyAfterMask : EngineError { using EngineError::EngineError; };
struct BadCheckpoint : EngineError { using EngineError::EngineError; };

struct ToolDenied : EngineError { using EngineError::EngineError; };

struct EmptyPopulation : EngineError { using EngineError::EngineError; };
struct NoSuccesses : EngineError { using EngineError::EngineError; };
struct ZeroActions : EngineError { using EngineError::EngineError; };

struct ConfigError : EngineError { using EngineError::EngineError; };

}  // namespace pocadapt

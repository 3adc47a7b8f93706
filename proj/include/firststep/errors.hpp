#pragma once

#include <stdexcept>
#include <string>

namespace firststep {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration: unknown format tag, pool too small, missing paths.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input record; message carries file/line and the offending field.
struct ParseError : Error {
    using Error::Error;
};

// Arithmetic expression evaluation failure (bad token, division by zero).
struct EvalError : Error {
    using Error::Error;
};

// No parseable number where one was required.
struct ExtractionError : Error {
    using Error::Error;
};

// Prompt template structural problems: missing strategy fields, template drift.
struct TemplateError : Error {
    using Error::Error;
};

// Transport-level failure after retries; message carries the prompt hash.
struct BackendError : Error {
    using Error::Error;
};

// Endpoint answered but not in the expected shape.
struct ProtocolError : Error {
    using Error::Error;
};

// Generation cache is internally inconsistent; message names the record key.
struct IntegrityError : Error {
    using Error::Error;
};

// Guidance gate violation: a leaked or unguidable first step must never be injected.
struct RefusalError : Error {
    using Error::Error;
};

}  // namespace firststep

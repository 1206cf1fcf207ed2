#pragma once

#include <stdexcept>
#include <string>

namespace refinery {

// Base for every error raised by the pipeline. Subclasses discriminate the
// failure class so callers (grid search, CLI) can react without string
// matching.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Malformed external input (corpus line, provider reply, stage file).
class ParseError : public Error {
public:
    using Error::Error;
};

// Structurally valid input that breaks an invariant (duplicate ids,
// misaligned rows, non-finite coordinates).
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A metric or statistic is undefined for the given input (fewer than two
// clusters, zero variance, all-tied samples).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

// Remote or mock provider failed after retries.
class ProviderError : public Error {
public:
    using Error::Error;
};

// The configured spend ceiling would be exceeded by the next call.
class CostLimitError : public Error {
public:
    using Error::Error;
};

// Run-directory conflicts: re-saving a done stage, missing manifest,
// config digest mismatch, concurrent writer.
class StoreError : public Error {
public:
    using Error::Error;
};

// CLI/pipeline configuration problems detected before any stage runs.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace refinery

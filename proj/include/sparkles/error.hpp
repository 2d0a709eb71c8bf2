#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sparkles {

/// Base class for every error the toolkit raises. `kind()` is the stable,
/// machine-readable name used in CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SPARKLES_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

// core-schema
SPARKLES_DEFINE_ERROR(SyntaxError)
SPARKLES_DEFINE_ERROR(SchemaError)

// llm-client
SPARKLES_DEFINE_ERROR(TransportError)
SPARKLES_DEFINE_ERROR(AuthError)
SPARKLES_DEFINE_ERROR(ProtocolError)
SPARKLES_DEFINE_ERROR(FixtureMiss)

// gen-pipeline
SPARKLES_DEFINE_ERROR(PoolExhausted)
SPARKLES_DEFINE_ERROR(TemplateError)
SPARKLES_DEFINE_ERROR(NoJsonFound)

// train-builder
SPARKLES_DEFINE_ERROR(UnknownImageId)
SPARKLES_DEFINE_ERROR(FramingError)
SPARKLES_DEFINE_ERROR(IOError)

// judge-eval
SPARKLES_DEFINE_ERROR(EmptyResponse)
SPARKLES_DEFINE_ERROR(MalformedVerdict)
SPARKLES_DEFINE_ERROR(EvalAborted)

// task-eval
SPARKLES_DEFINE_ERROR(FormatViolation)
SPARKLES_DEFINE_ERROR(Ambiguous)

// analytics
SPARKLES_DEFINE_ERROR(NoPairFound)

// cli
SPARKLES_DEFINE_ERROR(ConfigError)

#undef SPARKLES_DEFINE_ERROR

/// Raised when every generation attempt for one request failed. Carries the
/// per-attempt failure reasons.
class GenerationFailed : public Error {
 public:
  GenerationFailed(const std::string& message, std::vector<std::string> reasons)
      : Error("GenerationFailed", message), reasons_(std::move(reasons)) {}

  const std::vector<std::string>& reasons() const noexcept { return reasons_; }

 private:
  std::vector<std::string> reasons_;
};

}  // namespace sparkles

#pragma once

#include <exception>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sparkles/config.hpp"
#include "sparkles/llm_client.hpp"

namespace sparkles {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,    // validation failure, GenerationFailed, EvalAborted
  kExitConfig = 2,     // usage, configuration, missing input, AuthError
  kExitTransport = 3,  // retries exhausted, protocol errors
};

int exit_code_for(const std::exception& e);

/// `{"error": kind, "message": ..., "exit_code": n}`
std::string error_json(const std::exception& e);

struct CliIo {
  std::ostream& out;
  std::ostream& err;
  EnvLookup env = process_env();
  /// Replaces the network transport when set and no mock fixture is given.
  std::shared_ptr<Transport> transport;
  Sleeper sleeper = real_sleeper();
};

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, CliIo& io);
int dispatch(int argc, char** argv);

}  // namespace sparkles

#ifndef FWICERT_CLI_HPP
#define FWICERT_CLI_HPP

#include <iosfwd>
#include <string>

#include "fwicert/config.hpp"

namespace fwicert {

/// Runs one subcommand pipeline against the effective configuration.
/// Known commands: gen-data, train, certify, perturb, generalize, drift,
/// report. Returns a process exit status: 0 on success, 2 for an unknown
/// command (usage goes to `err`), 1 on a structured error line.
int dispatch(const std::string& command, const CliConfig& config, std::ostream& out,
             std::ostream& err);

std::string usage_text();

} // namespace fwicert

#endif

// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace risloc {

/// Runs the command-line front end. Returns the process exit status:
/// 0 success, 1 usage/validation error, 2 runtime failure.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace risloc

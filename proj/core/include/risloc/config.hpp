// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <istream>
#include <map>
#include <string>

#include "risloc/harness.hpp"

namespace risloc {

/// Sectioned key/value text, flattened to "section.key" -> raw value string.
/// Lines are `key = value`, sections are `[name]`, comments start with # or ;.
using ConfigMap = std::map<std::string, std::string>;

/// Parses the structured text; throws ParseError with the offending line number.
ConfigMap parse_config_text(std::istream &in);
ConfigMap parse_config_file(const std::string &path);

/// Applies one `section.key=value` override on top of a parsed map.
void apply_override(ConfigMap &map, const std::string &assignment);

/// Materializes an experiment configuration. Unspecified keys fall back to the
/// built-in defaults (28 GHz carrier, 1 MHz bandwidth, 20 dBm, -174 dBm/Hz,
/// 8 dB noise figure, 32x32 half-wavelength RIS at the origin, BS at [3,3,1],
/// 40 pilots, UE along [-1,2,1]/sqrt(6)). Unknown keys are rejected by name.
ExperimentConfig experiment_from_map(const ConfigMap &map);

/// Convenience: defaults only.
ExperimentConfig default_experiment();

/// Canonical `section.key = value` serialization (sorted, 17 significant
/// digits); input to the config hash recorded in run metadata.
std::string canonical_config(const ExperimentConfig &config);

/// FNV-1a 64-bit over the canonical serialization, hex-encoded.
std::string config_hash(const ExperimentConfig &config);

} // namespace risloc

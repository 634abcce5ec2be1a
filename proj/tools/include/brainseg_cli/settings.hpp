#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "brainseg/run_config.hpp"

namespace brainseg::cli {

/// Explicitly provided settings keyed by their config-file name. Values are
/// kept as text until applied so that file, flag and stored-run sources all
/// go through the same parser.
using Settings = std::map<std::string, std::string>;

/// Reads a flat `key = value` INI file as written by to_ini().
Settings read_settings_file(const std::filesystem::path& path);

/// Applies every entry to cfg. Unknown keys and malformed values throw
/// Error(InvalidConfig); unknown variants throw Error(UnknownVariant).
void apply_settings(const Settings& settings, RunConfig& cfg);

/// `over` wins on conflicts.
Settings merge(Settings base, const Settings& over);

}  // namespace brainseg::cli

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oscope/errors.hpp"
#include "oscope/io.hpp"

namespace oscope::cli {

/// Config does not match the expected shape; the message starts with the field path.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error("SchemaError", what) {}
};

/// A referenced input file or run directory does not exist.
class MissingInputError : public Error {
public:
    explicit MissingInputError(const std::string& what) : Error("MissingInputError", what) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitMissing = 3;
inline constexpr int kExitCompute = 4;

inline constexpr const char* kManifestName = "run_manifest.json";

std::string tool_version();
std::string sha256_hex(std::string_view bytes);

/// The verbs a step may name.
const std::vector<std::string>& step_verbs();

/// Runs every step of an experiment config into `out_dir` and writes the run
/// manifest last. Relative inputs resolve against the run directory first,
/// then `config_dir`. Returns the manifest.
Json run_experiment(const Json& config, const std::filesystem::path& config_dir, const std::filesystem::path& out_dir);

/// Reads a config file; SchemaError if it is not a JSON object.
Json load_config(const std::filesystem::path& path);

/// Markdown and CSV comparison tables over finished runs.
struct ComparisonReport {
    std::string markdown;
    std::string csv;
};
ComparisonReport compare_runs(const std::vector<std::filesystem::path>& run_dirs, const std::string& title = {});

/// Exit code for an exception escaping a verb.
int exit_code_for(const std::exception& e);

}  // namespace oscope::cli

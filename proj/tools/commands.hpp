#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flowgrasp/pipeline.hpp"

namespace flowgrasp::cli {

enum ExitCode { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Parses argv and runs the selected subcommand. Never throws.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Sample file: a header line followed by one line per sample.
struct SampleFile {
  nlohmann::json header;
  std::vector<SampleRecord> records;
};

void write_samples(const SampleFile& f, const HandSpec& spec, const std::string& path);
SampleFile read_samples(const std::string& path, const HandSpec& spec);

/// Provenance block embedded in (or written beside) every artifact.
nlohmann::json provenance(const RunConfig& cfg);

/// Probe batch used to compare checkpoints by their outputs.
std::string checkpoint_probe(const FlowCheckpoint& ckpt);

}  // namespace flowgrasp::cli

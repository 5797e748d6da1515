#pragma once

namespace weaver {

// Full command-line entry point (subcommands: ingest, fit, select, eval,
// scaling-fit, synth, export-distill). Returns the process exit code:
// 0 success, 2 domain/validation failure, 1 unexpected error.
int cli_main(int argc, char** argv);

}  // namespace weaver

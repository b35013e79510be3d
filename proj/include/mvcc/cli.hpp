#pragma once

namespace mvcc {

// Parses argv and dispatches to the gen-data / train / caption / eval
// subcommands. Returns the process exit code: 0 success, 2 config error,
// 3 ingestion error, 4 numeric failure.
int cli_main(int argc, char** argv);

}  // namespace mvcc

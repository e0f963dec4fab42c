#pragma once

#include <cstdio>
#include <iosfwd>
#include <string>
#include <vector>

namespace stm {

/// Process exit status of `run`.
enum class ExitStatus : int {
  ok = 0,
  validation_failed = 1,
  config_error = 2,
  non_convergence = 3,
  internal_error = 4,
};

struct RunOptions {
  int threads = 1;
  /// Forces every stage onto one thread. Tables are byte-identical either
  /// way; this only removes the thread pool from the picture.
  bool strict_sequential = false;
};

/// Subcommands accepted by `run`.
const std::vector<std::string>& subcommands();

/// Runs one subcommand on a config file and writes CSV tables plus
/// report.json into `out_dir` (created if missing). Diagnostics and a
/// one-line summary go to `log`.
ExitStatus run(const std::string& subcommand, const std::string& config_path,
               const std::string& out_dir, const RunOptions& options, std::ostream& log);

/// Comma-separated table with a single header row; numbers use 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<double>& values);

 private:
  std::FILE* file_;
  std::size_t columns_;
};

}  // namespace stm

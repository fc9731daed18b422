#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace facegen {

/// Temporary directory removed on destruction.
class ScratchDirectory {
 public:
  explicit ScratchDirectory(const std::string& prefix);
  ~ScratchDirectory();
  ScratchDirectory(const ScratchDirectory&) = delete;
  ScratchDirectory& operator=(const ScratchDirectory&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string stdout_text;
};

/// Runs `command` through /bin/sh with `stdin_text` on standard input and
/// captures standard output.
CommandResult run_command(const std::string& command, const std::string& stdin_text);

std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& replacements);

}  // namespace facegen

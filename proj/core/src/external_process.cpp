#include "facegen/external_process.hpp"

#include <sys/wait.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <random>

#include "facegen/errors.hpp"
#include "facegen/persistence.hpp"

namespace facegen {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += "'";
  return out;
}

}  // namespace

ScratchDirectory::ScratchDirectory(const std::string& prefix) {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  const auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 16; ++attempt) {
    auto candidate = base / (prefix + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::error_code ec;
    if (std::filesystem::create_directory(candidate, ec)) {
      path_ = std::move(candidate);
      return;
    }
  }
  fail(ErrorKind::Persistence, "cannot create scratch directory under " + base.string());
}

ScratchDirectory::~ScratchDirectory() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

CommandResult run_command(const std::string& command, const std::string& stdin_text) {
  ScratchDirectory scratch("facegen-cmd");
  const auto input = scratch.path() / "stdin.txt";
  write_file_text(input, stdin_text);

  const std::string full = "(" + command + ") < " + shell_quote(input.string());
  FILE* pipe = ::popen(full.c_str(), "r");
  if (pipe == nullptr) fail(ErrorKind::BackendUnavailable, "cannot spawn: " + command);

  CommandResult result;
  std::array<char, 4096> buf;
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) result.stdout_text.append(buf.data(), n);
  const int status = ::pclose(pipe);
  result.exit_code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& replacements) {
  for (const auto& [key, value] : replacements) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
      text.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return text;
}

}  // namespace facegen

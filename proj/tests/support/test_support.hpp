#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include <doctest.h>

#include "facegen/errors.hpp"
#include "facegen/rng.hpp"
#include "facegen/types.hpp"

namespace facegen::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("facegen-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline LatentVector random_latent(SplitMix64& rng) {
  LatentVector z;
  for (std::size_t i = 0; i < kLatentDim; ++i) z[i] = static_cast<float>(rng.normal());
  return z;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace facegen::testing

/// Asserts that `expr` throws facegen::Error of the given kind.
#define CHECK_FAILS_WITH(expr, error_kind)                                        \
  do {                                                                            \
    bool facegen_thrown_ = false;                                                 \
    try {                                                                         \
      (void)(expr);                                                               \
    } catch (const ::facegen::Error& facegen_e_) {                                \
      facegen_thrown_ = true;                                                     \
      CHECK_MESSAGE(facegen_e_.kind() == (error_kind), facegen_e_.what());        \
    }                                                                             \
    CHECK_MESSAGE(facegen_thrown_, "expected a facegen::Error from " #expr);      \
  } while (false)

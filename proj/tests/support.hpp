#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "exocast/error.hpp"
#include "exocast/rng.hpp"

namespace exocast::testkit {

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = shift + scale * rng.normal();
  return v;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline std::filesystem::path fixture_dir() { return EXOCAST_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("exocast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace exocast::testkit

#define EXPECT_ERRC(errc, ...)                                     \
  do {                                                              \
    try {                                                           \
      (void)(__VA_ARGS__);                                          \
      ADD_FAILURE() << "expected " << ::exocast::to_string(errc);   \
    } catch (const ::exocast::Error& e) {                           \
      EXPECT_EQ(e.code(), errc) << e.what();                        \
    }                                                               \
  } while (0)

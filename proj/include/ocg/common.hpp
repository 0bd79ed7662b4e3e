// Copyright 2026 The ocg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OCG_COMMON_HPP
#define OCG_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ocg {

inline constexpr const char* kArtifactVersion = "0.1.0";

// All structured errors thrown by the library. Non-convergence of iterative
// solvers is reported through result flags, never through this type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// SplitMix64 step; used to derive independent per-sample seeds from a base
// seed without correlated low bits.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ocg

#endif  // OCG_COMMON_HPP

// Copyright 2026 The maskref Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>

namespace maskref {

// Deterministic random stream: xoshiro256** seeded through splitmix64 from
// (seed, stream_id). Every distribution below is defined bit-exactly here, so
// draws are identical across standard libraries and platforms.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();

  // True with probability p; p <= 0 never consumes a "true", p >= 1 always.
  bool bernoulli(double p);

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Index drawn proportionally to non-negative weights. Returns weights.size()
  // when every weight is zero so callers can choose their own fallback.
  std::size_t categorical(std::span<const double> weights);

  // Child stream whose sequence depends only on (seed, stream_id, child_id).
  RngStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4];
};

// splitmix64 finalizer; exposed so callers can hash identifiers into stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace maskref

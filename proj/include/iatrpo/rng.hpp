#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace iatrpo {

using Rng = std::mt19937_64;

// Named sub-streams of a master seed. Every consumer of randomness draws its
// seed through derive_seed so that results depend only on (seed, stream,
// index) and never on call order across streams.
enum class Stream : std::uint64_t {
  kInit = 1,
  kRollout = 2,
  kProbe = 3,
  kValueFit = 4,
  kEval = 5,
  kPairing = 6,
};

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline Rng make_rng(std::uint64_t master,
                    std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

inline std::uint64_t stream_id(Stream s) {
  return static_cast<std::uint64_t>(s);
}

}  // namespace iatrpo

#pragma once

#include <cstddef>
#include <cstdint>

namespace genhead {

// Counter-based splitmix64 generator. The state is a 64-bit counter advanced by
// the golden-ratio increment 0x9E3779B97F4A7C15; each output is the splitmix64
// finalizer applied to the new counter value:
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// Derived quantities:
//   uniform()  = (next() >> 11) * 2^-53                      in [0, 1)
//   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)          one Box-Muller draw per call
//   index(n)   = next() % n
//
// Every random draw in the project goes through this class so that a run is
// reproducible from its seed in any language.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::size_t index(std::size_t n);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Independent sub-stream seed: splitmix64 finalizer of seed mixed with a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace genhead

#pragma once

#include <filesystem>
#include <string>

#include "rolealign/synth.hpp"

namespace testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(ROLEALIGN_TEST_DATA) / name;
}

inline rolealign::Template formation(int k, std::uint64_t seed, double separation = 3.0) {
  rolealign::FormationSpec f;
  f.k = k;
  f.separation = separation;
  f.max_anisotropy = 1.8;
  f.seed = seed;
  return rolealign::generate_formation(f);
}

inline rolealign::Sample sample(const rolealign::Template& t, std::size_t frames,
                                std::uint64_t seed, double swap_rate = 0.0) {
  rolealign::SampleSpec s;
  s.frames = frames;
  s.swap_rate = swap_rate;
  s.seed = seed;
  return rolealign::sample_dataset(t, s);
}

}  // namespace testing

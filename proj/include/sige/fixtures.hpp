#pragma once

#include <string>
#include <vector>

#include "sige/tensor.hpp"

namespace sige {

// A paired original/edited input where the edit touches a known fraction of
// the canvas. Everything is derived from the seed, so fixtures are
// reproducible without any data files.
struct EditFixture {
  std::string name;
  double target_area = 0.0;
  Tensor original;
  Tensor edited;
};

// Fixture kinds: rect1 (~1.2% square), rect5 / rect15 / rect35 (squares of
// that coverage), blob5 (grown irregular region, ~5%), multi15 (three
// disjoint rectangles, ~15% combined).
std::vector<std::string> edit_fixture_names();
EditFixture make_edit_fixture(const std::string& kind, int n, int c, int h,
                              int w, uint32_t seed);

}  // namespace sige

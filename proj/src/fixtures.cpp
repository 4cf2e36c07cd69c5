#include "sige/fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "sige/common.hpp"

namespace sige {

namespace {

struct Region {
  int h = 0, w = 0;
  std::vector<uint8_t> on;
  void mark(int y, int x) { on[static_cast<size_t>(y) * w + x] = 1; }
  bool get(int y, int x) const { return on[static_cast<size_t>(y) * w + x] != 0; }
};

void mark_rect(Region& r, int y0, int x0, int he, int we) {
  for (int y = y0; y < y0 + he; ++y) {
    for (int x = x0; x < x0 + we; ++x) r.mark(y, x);
  }
}

// Square of ~target_px pixels at a seeded position.
void place_square(Region& r, Rng& rng, double target_px, int x_lo, int x_hi) {
  int side = std::max(1, static_cast<int>(std::lround(std::sqrt(target_px))));
  int we = std::min(side, x_hi - x_lo);
  int he = std::max(1, static_cast<int>(std::lround(target_px / we)));
  he = std::min(he, r.h);
  int y0 = rng.uniform_int(0, r.h - he);
  int x0 = x_lo + rng.uniform_int(0, (x_hi - x_lo) - we);
  mark_rect(r, y0, x0, he, we);
}

// Irregular region grown from a seeded start point, 4-connected.
void place_blob(Region& r, Rng& rng, int target_px) {
  int y0 = rng.uniform_int(r.h / 4, 3 * r.h / 4);
  int x0 = rng.uniform_int(r.w / 4, 3 * r.w / 4);
  std::vector<std::pair<int, int>> frontier{{y0, x0}};
  int painted = 0;
  while (painted < target_px && !frontier.empty()) {
    int pick = rng.uniform_int(0, static_cast<int>(frontier.size()) - 1);
    auto [y, x] = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    if (r.get(y, x)) continue;
    r.mark(y, x);
    ++painted;
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    for (int d = 0; d < 4; ++d) {
      int ny = y + dy[d], nx = x + dx[d];
      if (ny >= 0 && ny < r.h && nx >= 0 && nx < r.w && !r.get(ny, nx)) {
        frontier.push_back({ny, nx});
      }
    }
  }
}

Region build_region(const std::string& kind, int h, int w, Rng& rng,
                    double& target_area) {
  Region r;
  r.h = h;
  r.w = w;
  r.on.assign(static_cast<size_t>(h) * w, 0);
  double px = static_cast<double>(h) * w;
  if (kind == "rect1") {
    target_area = 0.012;
    place_square(r, rng, target_area * px, 0, w);
  } else if (kind == "rect5") {
    target_area = 0.05;
    place_square(r, rng, target_area * px, 0, w);
  } else if (kind == "rect15") {
    target_area = 0.15;
    place_square(r, rng, target_area * px, 0, w);
  } else if (kind == "rect35") {
    target_area = 0.35;
    place_square(r, rng, target_area * px, 0, w);
  } else if (kind == "blob5") {
    target_area = 0.05;
    place_blob(r, rng, static_cast<int>(std::lround(target_area * px)));
  } else if (kind == "multi15") {
    // Three disjoint rectangles, one per vertical band.
    target_area = 0.15;
    for (int band = 0; band < 3; ++band) {
      int x_lo = band * w / 3;
      int x_hi = (band + 1) * w / 3;
      place_square(r, rng, target_area * px / 3.0, x_lo, x_hi);
    }
  } else {
    throw ConfigError("unknown edit fixture: " + kind +
                      " (expected one of rect1, rect5, rect15, rect35, blob5,"
                      " multi15)");
  }
  return r;
}

}  // namespace

std::vector<std::string> edit_fixture_names() {
  return {"rect1", "rect5", "rect15", "rect35", "blob5", "multi15"};
}

EditFixture make_edit_fixture(const std::string& kind, int n, int c, int h,
                              int w, uint32_t seed) {
  Rng rng(seed);
  EditFixture fx;
  fx.name = kind;
  fx.original = Tensor(n, c, h, w);
  fill_uniform(fx.original, rng, -1.0f, 1.0f);
  Region region = build_region(kind, h, w, rng, fx.target_area);
  fx.edited = fx.original;
  // Offsets stay clear of the difference threshold on every channel.
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!region.get(y, x)) continue;
          float mag = rng.uniform(0.05f, 0.5f);
          float sign = rng.uniform(0.0f, 1.0f) < 0.5f ? -1.0f : 1.0f;
          fx.edited.at(in, ic, y, x) += sign * mag;
        }
      }
    }
  }
  return fx;
}

}  // namespace sige

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "coalab/rotation.hpp"

using namespace coalab;

namespace {

std::set<std::uint32_t> rows_touched(const std::vector<std::uint32_t>& logical, const RotationState& s) {
  std::set<std::uint32_t> rows;
  for (auto x : logical) rows.insert(translate(x, s) / s.elems_per_line);
  return rows;
}

}  // namespace

TEST_CASE("translate") {
  auto s = RotationState::identity(16, 16);
  for (std::uint32_t x = 0; x < 256; ++x) CHECK(translate(x, s) == x);
  s.offsets[0] = 1;
  CHECK(translate(0, s) == 16);
  CHECK(translate(240, s) == 0);
  CHECK_THROWS_AS(translate(256, s), std::out_of_range);
}

TEST_CASE("zero shifts leave the table but bump the generation") {
  auto s = RotationState::identity(16, 16);
  std::vector<std::uint32_t> table(256);
  std::iota(table.begin(), table.end(), 1000u);
  const auto orig = table;
  const std::vector<std::uint32_t> zero(16, 0);
  const auto next = rotate_by(s, table, zero);
  CHECK(table == orig);
  CHECK(next.generation == 1);
  CHECK(next.is_identity());
}

TEST_CASE("l unit rotations restore the layout") {
  auto s = RotationState::identity(16, 16);
  std::vector<std::uint32_t> table(256);
  std::iota(table.begin(), table.end(), 0u);
  const auto orig = table;
  const std::vector<std::uint32_t> ones(16, 1);
  for (int i = 0; i < 16; ++i) {
    s = rotate_by(s, table, ones);
    if (i < 15) CHECK(table != orig);
  }
  CHECK(table == orig);
  CHECK(s.is_identity());
  CHECK(s.generation == 16);
}

TEST_CASE("random rotations stay a consistent permutation") {
  Rng rng(31);
  auto s = RotationState::identity(16, 16);
  std::vector<std::uint32_t> table(256);
  std::iota(table.begin(), table.end(), 0u);
  const auto orig = table;
  for (int i = 0; i < 1000; ++i) {
    const auto draw = i % 2 == 0 ? OffsetDraw::unique : OffsetDraw::with_replacement;
    s = rotate(s, table, rng, draw);
  }
  auto sorted = table;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);
  std::set<std::uint32_t> image;
  for (std::uint32_t x = 0; x < 256; ++x) {
    const auto p = translate(x, s);
    image.insert(p);
    CHECK(table[p] == orig[x]);
  }
  CHECK(image.size() == 256);
}

TEST_CASE("unique draw gives distinct shifts") {
  Rng rng(32);
  const auto s = RotationState::identity(16, 16);
  for (int i = 0; i < 500; ++i) {
    const auto shifts = draw_shifts(s, rng, OffsetDraw::unique);
    CHECK(std::set<std::uint32_t>(shifts.begin(), shifts.end()).size() == 16);
    for (auto v : shifts) CHECK(v < 16);
  }
  CHECK_THROWS_AS(draw_shifts(RotationState::identity(8, 4), rng, OffsetDraw::unique),
                  std::invalid_argument);
}

TEST_CASE("worked 4x4 example: shifts 2,3,0,1 take 7 accesses from 4 rows to 3") {
  // (row, column) pairs of the seven lookups, row-major in a 4-wide line.
  const std::vector<std::pair<std::uint32_t, std::uint32_t>> cells = {
      {0, 0}, {3, 0}, {1, 1}, {2, 1}, {0, 2}, {2, 2}, {3, 3}};
  std::vector<std::uint32_t> logical;
  for (auto [r, c] : cells) logical.push_back(r * 4 + c);

  auto s = RotationState::identity(4, 4);
  CHECK(rows_touched(logical, s).size() == 4);
  std::vector<std::uint32_t> table(16);
  std::iota(table.begin(), table.end(), 0u);
  const std::vector<std::uint32_t> shifts = {2, 3, 0, 1};
  s = rotate_by(s, table, shifts);
  CHECK(rows_touched(logical, s).size() == 3);
  for (auto x : logical) CHECK(table[translate(x, s)] == x);
}

TEST_CASE("should_rotate") {
  const auto every1 = RotationSchedule::each(1);
  for (std::uint64_t i = 0; i < 10; ++i) CHECK(should_rotate(i, every1));
  const auto f = RotationSchedule::each(1000);
  CHECK_FALSE(should_rotate(999, f));
  CHECK(should_rotate(1000, f));
  CHECK_FALSE(should_rotate(1001, f));
  for (std::uint64_t i = 0; i < 3000; i += 7) CHECK_FALSE(should_rotate(i, RotationSchedule::off()));
  CHECK_THROWS_AS(RotationSchedule::each(0), std::invalid_argument);
}

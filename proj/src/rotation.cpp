#include "coalab/rotation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace coalab {

RotationState RotationState::identity(std::uint32_t elems_per_line, std::uint32_t lines) {
  if (elems_per_line == 0 || lines == 0) {
    throw std::invalid_argument("rotation: table geometry must be positive");
  }
  RotationState s;
  s.elems_per_line = elems_per_line;
  s.lines = lines;
  s.offsets.assign(elems_per_line, 0);
  return s;
}

bool RotationState::is_identity() const {
  return std::all_of(offsets.begin(), offsets.end(), [](std::uint32_t o) { return o == 0; });
}

std::uint32_t translate(std::uint32_t logical, const RotationState& state) {
  if (logical >= state.size()) {
    throw std::out_of_range("rotation: logical index outside table");
  }
  const std::uint32_t row = logical / state.elems_per_line;
  const std::uint32_t col = logical % state.elems_per_line;
  return ((row + state.offsets[col]) % state.lines) * state.elems_per_line + col;
}

RotationState rotate_by(const RotationState& state, std::span<std::uint32_t> table,
                        std::span<const std::uint32_t> shifts) {
  const std::uint32_t m = state.elems_per_line;
  const std::uint32_t l = state.lines;
  if (table.size() != state.size()) {
    throw std::invalid_argument("rotation: table size does not match m*l");
  }
  if (shifts.size() != m) {
    throw std::invalid_argument("rotation: need one shift per column");
  }

  // Scratch copy: shifting in place would overwrite rows before they are moved.
  const std::vector<std::uint32_t> before(table.begin(), table.end());
  RotationState next = state;
  for (std::uint32_t i = 0; i < m; ++i) {
    const std::uint32_t r = shifts[i] % l;
    for (std::uint32_t j = 0; j < l; ++j) {
      table[((j + r) % l) * m + i] = before[j * m + i];
    }
    next.offsets[i] = (state.offsets[i] + r) % l;
  }
  ++next.generation;
  return next;
}

std::vector<std::uint32_t> draw_shifts(const RotationState& state, Rng& rng, OffsetDraw draw) {
  const std::uint32_t m = state.elems_per_line;
  const std::uint32_t l = state.lines;
  std::vector<std::uint32_t> shifts(m);
  if (draw == OffsetDraw::unique) {
    if (m > l) {
      throw std::invalid_argument("rotation: unique shifts need elems_per_line <= lines");
    }
    std::vector<std::uint32_t> pool(l);
    std::iota(pool.begin(), pool.end(), 0u);
    // Partial Fisher-Yates: the first m slots end up a uniform draw without replacement.
    for (std::uint32_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::uint32_t> pick(i, l - 1);
      std::swap(pool[i], pool[pick(rng)]);
      shifts[i] = pool[i];
    }
  } else {
    std::uniform_int_distribution<std::uint32_t> pick(0, l - 1);
    for (auto& s : shifts) s = pick(rng);
  }
  return shifts;
}

RotationState rotate(const RotationState& state, std::span<std::uint32_t> table, Rng& rng,
                     OffsetDraw draw) {
  const auto shifts = draw_shifts(state, rng, draw);
  return rotate_by(state, table, shifts);
}

RotationSchedule RotationSchedule::each(std::uint64_t f) {
  if (f == 0) throw std::invalid_argument("rotation: frequency must be >= 1");
  return RotationSchedule{f};
}

bool should_rotate(std::uint64_t sample_counter, const RotationSchedule& schedule) {
  return schedule.every.has_value() && sample_counter % *schedule.every == 0;
}

}  // namespace coalab

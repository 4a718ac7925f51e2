#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coalab/rng.hpp"

namespace coalab {

/// Column-wise rotation of a table laid out as `lines` rows of `elems_per_line`
/// elements. Column i of logical row j lives in physical row (j + offsets[i]) mod lines.
struct RotationState {
  std::uint32_t elems_per_line = 16;
  std::uint32_t lines = 16;
  std::vector<std::uint32_t> offsets = std::vector<std::uint32_t>(16, 0);
  std::uint64_t generation = 0;

  static RotationState identity(std::uint32_t elems_per_line, std::uint32_t lines);

  std::uint32_t size() const { return elems_per_line * lines; }
  bool is_identity() const;
};

/// Logical to physical element index. Throws std::out_of_range for bad indices.
std::uint32_t translate(std::uint32_t logical, const RotationState& state);

enum class OffsetDraw {
  unique,            ///< per-column shifts drawn without replacement (needs m <= l)
  with_replacement,  ///< independent uniform shifts
};

/// Shifts column i by shifts[i] rows, permuting `table` to match. The returned state
/// composes the shifts with the previous offsets (mod lines).
RotationState rotate_by(const RotationState& state, std::span<std::uint32_t> table,
                        std::span<const std::uint32_t> shifts);

/// One rotation with freshly drawn shifts.
RotationState rotate(const RotationState& state, std::span<std::uint32_t> table, Rng& rng,
                     OffsetDraw draw = OffsetDraw::unique);

/// Draws the per-column shifts used by rotate().
std::vector<std::uint32_t> draw_shifts(const RotationState& state, Rng& rng, OffsetDraw draw);

/// Rotate once every `every` encrypted samples; disabled when empty.
struct RotationSchedule {
  std::optional<std::uint64_t> every;

  static RotationSchedule off() { return {}; }
  static RotationSchedule each(std::uint64_t f);
};

/// True iff the schedule is enabled and counter is a multiple of its frequency.
bool should_rotate(std::uint64_t sample_counter, const RotationSchedule& schedule);

}  // namespace coalab

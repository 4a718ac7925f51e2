#include "coalab/aes.hpp"

#include <stdexcept>

namespace coalab {
namespace {

constexpr std::array<std::uint8_t, 256> kSbox = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
};

constexpr std::array<std::uint8_t, 11> kRcon = {0x00, 0x01, 0x02, 0x04, 0x08, 0x10,
                                                0x20, 0x40, 0x80, 0x1b, 0x36};

constexpr std::uint8_t xtime(std::uint8_t b) {
  return static_cast<std::uint8_t>((b << 1) ^ ((b & 0x80) ? 0x1b : 0x00));
}

constexpr std::uint32_t ror8(std::uint32_t w) { return (w >> 8) | (w << 24); }

std::uint32_t load_be(const Block& b, std::size_t word) {
  return (std::uint32_t{b[4 * word]} << 24) | (std::uint32_t{b[4 * word + 1]} << 16) |
         (std::uint32_t{b[4 * word + 2]} << 8) | std::uint32_t{b[4 * word + 3]};
}

void store_be(Block& b, std::size_t word, std::uint32_t v) {
  b[4 * word] = static_cast<std::uint8_t>(v >> 24);
  b[4 * word + 1] = static_cast<std::uint8_t>(v >> 16);
  b[4 * word + 2] = static_cast<std::uint8_t>(v >> 8);
  b[4 * word + 3] = static_cast<std::uint8_t>(v);
}

std::array<std::uint8_t, 4> sub_rot(std::array<std::uint8_t, 4> w, std::size_t round) {
  return {static_cast<std::uint8_t>(kSbox[w[1]] ^ kRcon[round]), kSbox[w[2]], kSbox[w[3]],
          kSbox[w[0]]};
}

TTables build_tables() {
  TTables t;
  for (std::uint32_t x = 0; x < 256; ++x) {
    const std::uint32_t s = kSbox[x];
    const std::uint32_t s2 = xtime(static_cast<std::uint8_t>(s));
    const std::uint32_t s3 = s2 ^ s;
    t.t0[x] = (s2 << 24) | (s << 16) | (s << 8) | s3;
    t.t1[x] = ror8(t.t0[x]);
    t.t2[x] = ror8(t.t1[x]);
    t.t3[x] = ror8(t.t2[x]);
    t.t4[x] = s * 0x01010101u;
    t.inv_t4_byte[s] = static_cast<std::uint8_t>(x);
  }
  return t;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(const Block& b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(32, '0');
  for (std::size_t i = 0; i < 16; ++i) {
    out[2 * i] = kDigits[b[i] >> 4];
    out[2 * i + 1] = kDigits[b[i] & 0xf];
  }
  return out;
}

Block block_from_hex(std::string_view hex) {
  if (hex.size() != 32) {
    throw std::invalid_argument("block: expected 32 hex digits, got " + std::to_string(hex.size()));
  }
  Block b{};
  for (std::size_t i = 0; i < 16; ++i) {
    const int hi = hex_digit(hex[2 * i]);
    const int lo = hex_digit(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("block: invalid hex digit");
    b[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return b;
}

KeySchedule expand_key(const Block& master) {
  KeySchedule ks;
  ks.round_keys[0] = master;
  for (std::size_t r = 1; r <= 10; ++r) {
    const Block& prev = ks.round_keys[r - 1];
    Block& next = ks.round_keys[r];
    const auto t = sub_rot({prev[12], prev[13], prev[14], prev[15]}, r);
    for (std::size_t i = 0; i < 4; ++i) next[i] = prev[i] ^ t[i];
    for (std::size_t i = 4; i < 16; ++i) next[i] = prev[i] ^ next[i - 4];
  }
  return ks;
}

Block invert_schedule(const Block& round10_key) {
  Block cur = round10_key;
  for (std::size_t r = 10; r >= 1; --r) {
    Block prev{};
    for (std::size_t i = 15; i >= 4; --i) prev[i] = cur[i] ^ cur[i - 4];
    const auto t = sub_rot({prev[12], prev[13], prev[14], prev[15]}, r);
    for (std::size_t i = 0; i < 4; ++i) prev[i] = cur[i] ^ t[i];
    cur = prev;
  }
  return cur;
}

const TTables& TTables::standard() {
  static const TTables tables = build_tables();
  return tables;
}

TableLayout TableLayout::identity(const TTables& tables) {
  TableLayout layout;
  layout.state = RotationState::identity(16, 16);
  layout.physical_t4 = tables.t4;
  layout.refresh_index();
  return layout;
}

void TableLayout::rotate(Rng& rng, OffsetDraw draw) {
  state = coalab::rotate(state, physical_t4, rng, draw);
  refresh_index();
}

void TableLayout::rotate_by(std::span<const std::uint32_t> shifts) {
  state = coalab::rotate_by(state, physical_t4, shifts);
  refresh_index();
}

void TableLayout::refresh_index() {
  if (state.size() != 256) throw std::invalid_argument("layout: t4 needs a 256-entry geometry");
  for (std::uint32_t x = 0; x < 256; ++x) {
    physical_index[x] = static_cast<std::uint8_t>(translate(x, state));
  }
}

bool TableLayout::consistent_with(const TTables& tables) const {
  if (state.size() != 256 || state.offsets.size() != state.elems_per_line) return false;
  for (std::uint32_t x = 0; x < 256; ++x) {
    if (physical_t4[physical_index[x]] != tables.t4[x]) return false;
  }
  return true;
}

Encryption encrypt_block(const Block& plaintext, const KeySchedule& ks, const TTables& tables,
                         const TableLayout& layout) {
  Encryption out;
  std::uint32_t s0 = load_be(plaintext, 0) ^ load_be(ks.round_keys[0], 0);
  std::uint32_t s1 = load_be(plaintext, 1) ^ load_be(ks.round_keys[0], 1);
  std::uint32_t s2 = load_be(plaintext, 2) ^ load_be(ks.round_keys[0], 2);
  std::uint32_t s3 = load_be(plaintext, 3) ^ load_be(ks.round_keys[0], 3);

  for (std::size_t r = 1; r < kRounds; ++r) {
    auto& rec = out.trace.rounds[r - 1];
    const std::array<std::uint32_t, 4> s = {s0, s1, s2, s3};
    std::array<std::uint32_t, 4> t{};
    for (std::size_t c = 0; c < 4; ++c) {
      const auto i0 = static_cast<std::uint8_t>(s[c] >> 24);
      const auto i1 = static_cast<std::uint8_t>(s[(c + 1) % 4] >> 16);
      const auto i2 = static_cast<std::uint8_t>(s[(c + 2) % 4] >> 8);
      const auto i3 = static_cast<std::uint8_t>(s[(c + 3) % 4]);
      rec[4 * c + 0] = {0, i0};
      rec[4 * c + 1] = {1, i1};
      rec[4 * c + 2] = {2, i2};
      rec[4 * c + 3] = {3, i3};
      t[c] = tables.t0[i0] ^ tables.t1[i1] ^ tables.t2[i2] ^ tables.t3[i3] ^
             load_be(ks.round_keys[r], c);
    }
    s0 = t[0];
    s1 = t[1];
    s2 = t[2];
    s3 = t[3];
  }

  // Last round: ciphertext byte 4c+q comes from byte q of state word (c+q) % 4, looked
  // up through the current physical layout.
  auto& last = out.trace.rounds[kRounds - 1];
  const std::array<std::uint32_t, 4> s = {s0, s1, s2, s3};
  for (std::size_t c = 0; c < 4; ++c) {
    std::uint32_t w = load_be(ks.round_keys[10], c);
    for (std::size_t q = 0; q < 4; ++q) {
      const auto logical = static_cast<std::uint8_t>(s[(c + q) % 4] >> (24 - 8 * q));
      const std::uint8_t physical = layout.physical_index[logical];
      last[4 * c + q] = {kLastRoundTable, physical};
      w ^= layout.physical_t4[physical] & (0xff000000u >> (8 * q));
    }
    store_be(out.ciphertext, c, w);
  }
  return out;
}

Block encrypt(const Block& plaintext, const KeySchedule& ks) {
  static const TableLayout identity = TableLayout::identity(TTables::standard());
  return encrypt_block(plaintext, ks, TTables::standard(), identity).ciphertext;
}

}  // namespace coalab

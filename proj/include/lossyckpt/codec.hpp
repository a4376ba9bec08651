#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lossyckpt/sparse.hpp"

namespace lossyckpt {

enum class CodecKind : std::uint8_t { Identity = 0, Lossless = 1, LossyRel = 2 };

/// Compression configuration. `eb` is the pointwise relative error bound
/// |v_i - v'_i| <= eb * |v_i| and is only used by LossyRel.
struct CodecSpec {
  CodecKind kind = CodecKind::Identity;
  double eb = 0.0;

  static CodecSpec identity() { return {CodecKind::Identity, 0.0}; }
  static CodecSpec lossless() { return {CodecKind::Lossless, 0.0}; }
  static CodecSpec lossy_rel(double eb) { return {CodecKind::LossyRel, eb}; }

  void validate() const;
  /// "identity", "lossless", or "lossy:<eb>".
  std::string to_string() const;
  static CodecSpec parse(const std::string& s);

  friend bool operator==(const CodecSpec&, const CodecSpec&) = default;
};

/// Elements with magnitude below this are stored verbatim by the lossy codec;
/// a pointwise relative bound cannot be met with finite bins near zero.
inline constexpr double kExactStorageFloor = 1e-300;

/// Lossless backends, recorded as the first payload byte of a Lossless frame.
enum class LosslessBackend : std::uint8_t { Deflate = 1, ShuffleDeflate = 2 };

/// Self-describing compressed payload.
///
/// Serialized little-endian as: magic "LCKP", u8 version, u8 codec id,
/// u64 element count, f64 eb (0 for exact codecs), u32 CRC-32 of the
/// payload, then the payload bytes.
struct CompressedFrame {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 26;

  CodecKind codec = CodecKind::Identity;
  std::uint64_t count = 0;
  double eb = 0.0;
  std::uint32_t checksum = 0;
  std::vector<std::uint8_t> payload;

  std::size_t serialized_size() const { return kHeaderBytes + payload.size(); }
  std::vector<std::uint8_t> serialize() const;
  void serialize_into(std::vector<std::uint8_t>& out) const;
  /// Parses a frame occupying all of `bytes`. Throws CorruptFrameError on a
  /// bad magic/version or short header; the checksum is checked by
  /// decompress().
  static CompressedFrame parse(std::span<const std::uint8_t> bytes);
};

/// Throws NonFiniteError on NaN/Inf input.
CompressedFrame compress(std::span<const double> data, const CodecSpec& spec);
/// Throws CorruptFrameError on a checksum mismatch or malformed payload and
/// UnknownCodecError on an unrecognised codec id.
Vector decompress(const CompressedFrame& frame);
/// 8 * count / payload bytes; 1 for an empty array.
double compression_ratio(const CompressedFrame& frame);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Maximum observed |v_i - v'_i| / |v_i| over elements above the exact
/// storage floor (elements below it must match exactly, else +inf).
double max_pointwise_relative_error(std::span<const double> original,
                                    std::span<const double> reconstructed);

}  // namespace lossyckpt

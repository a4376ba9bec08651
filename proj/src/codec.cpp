#include "lossyckpt/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "lossyckpt/errors.hpp"

namespace lossyckpt {

namespace {

constexpr std::uint8_t kMagic[4] = {'L', 'C', 'K', 'P'};
constexpr LosslessBackend kDefaultLosslessBackend = LosslessBackend::ShuffleDeflate;
constexpr std::size_t kBlockElements = 128;  // 1 KiB of doubles
constexpr std::int64_t kMaxQuantCode = std::int64_t{1} << 30;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
  return v;
}
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}
double get_f64(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<double>(get_u64(in, at));
}

std::vector<std::uint8_t> raw_bytes(std::span<const double> data) {
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * 8);
  for (double v : data) put_f64(out, v);
  return out;
}

std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> in, int level) {
  uLongf bound = compressBound(static_cast<uLong>(in.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), level) != Z_OK)
    throw Error("deflate failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(std::max<std::size_t>(expected, 1));
  uLongf len = static_cast<uLongf>(out.size());
  const int rc = uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size()));
  if (rc != Z_OK || len != expected) throw CorruptFrameError("corrupt frame: inflate failed");
  out.resize(expected);
  return out;
}

// Byte-plane transpose: all byte-0s, then all byte-1s, ...
std::vector<std::uint8_t> shuffle(std::span<const std::uint8_t> in) {
  const std::size_t n = in.size() / 8;
  std::vector<std::uint8_t> out(in.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < 8; ++b) out[b * n + i] = in[i * 8 + b];
  return out;
}
std::vector<std::uint8_t> unshuffle(std::span<const std::uint8_t> in) {
  const std::size_t n = in.size() / 8;
  std::vector<std::uint8_t> out(in.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < 8; ++b) out[i * 8 + b] = in[b * n + i];
  return out;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& at) {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (at >= in.size()) throw CorruptFrameError("corrupt frame: truncated code stream");
    const std::uint8_t byte = in[at++];
    v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
    if (!(byte & 0x80)) return v;
  }
  throw CorruptFrameError("corrupt frame: overlong varint");
}

std::uint64_t zigzag(std::int64_t q) {
  return (static_cast<std::uint64_t>(q) << 1) ^ static_cast<std::uint64_t>(q >> 63);
}
std::int64_t unzigzag(std::uint64_t z) {
  return static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1);
}

// Prediction from previously reconstructed values.
double predict(std::span<const double> recon, std::size_t i, int order) {
  if (i == 0) return 0.0;
  if (order == 1 || i == 1) return recon[i - 1];
  return 2.0 * recon[i - 1] - recon[i - 2];
}

// Quantizes v against prediction p with bin width 2*eb*|p|. Returns the
// quantization code (>= 1) and the reconstruction, or 0 when v must be
// stored verbatim. The bound is verified with the decoder's arithmetic.
struct Quantized {
  std::uint64_t code;
  double recon;
};

Quantized quantize(double v, double p, double eb) {
  if (!(std::abs(v) >= kExactStorageFloor)) return {0, v};
  const double width = 2.0 * eb * std::abs(p);
  if (!(width > 0.0) || !std::isfinite(width)) return {0, v};
  const double scaled = std::nearbyint((v - p) / width);
  if (!(std::abs(scaled) < static_cast<double>(kMaxQuantCode))) return {0, v};
  const auto q = static_cast<std::int64_t>(scaled);
  const double recon = p + static_cast<double>(q) * width;
  if (!(std::abs(v - recon) <= eb * std::abs(v))) return {0, v};
  return {zigzag(q) + 1, recon};
}

double dequantize(std::uint64_t code, double p, double eb) {
  const std::int64_t q = unzigzag(code - 1);
  const double width = 2.0 * eb * std::abs(p);
  return p + static_cast<double>(q) * width;
}

std::size_t code_cost_bits(std::uint64_t code) {
  if (code == 0) return 72;
  return 2 + 2 * static_cast<std::size_t>(std::bit_width(code));
}

// Stream (before the entropy stage):
//   u64 code-stream bytes, u64 exact count, predictor order per block,
//   varint codes, exact values.
std::vector<std::uint8_t> lossy_encode(std::span<const double> data, double eb) {
  const std::size_t n = data.size();
  const std::size_t blocks = (n + kBlockElements - 1) / kBlockElements;
  std::vector<double> recon(n);
  std::vector<std::uint8_t> orders;
  std::vector<std::uint8_t> codes;
  std::vector<double> exact;
  orders.reserve(blocks);

  std::vector<Quantized> trial[2];
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = blk * kBlockElements;
    const std::size_t hi = std::min(n, lo + kBlockElements);
    std::size_t cost[2] = {0, 0};
    for (int o = 0; o < 2; ++o) {
      trial[o].clear();
      for (std::size_t i = lo; i < hi; ++i) {
        const Quantized qz = quantize(data[i], predict(recon, i, o + 1), eb);
        recon[i] = qz.recon;
        trial[o].push_back(qz);
        cost[o] += code_cost_bits(qz.code);
      }
    }
    const int pick = cost[1] < cost[0] ? 1 : 0;
    orders.push_back(static_cast<std::uint8_t>(pick + 1));
    for (std::size_t i = lo; i < hi; ++i) {
      const Quantized& qz = trial[pick][i - lo];
      recon[i] = qz.recon;
      put_varint(codes, qz.code);
      if (qz.code == 0) exact.push_back(data[i]);
    }
  }

  std::vector<std::uint8_t> stream;
  stream.reserve(16 + orders.size() + codes.size() + 8 * exact.size());
  put_u64(stream, codes.size());
  put_u64(stream, exact.size());
  stream.insert(stream.end(), orders.begin(), orders.end());
  stream.insert(stream.end(), codes.begin(), codes.end());
  for (double v : exact) put_f64(stream, v);
  return stream;
}

Vector lossy_decode(std::span<const std::uint8_t> stream, std::size_t n, double eb) {
  const std::size_t blocks = (n + kBlockElements - 1) / kBlockElements;
  if (stream.size() < 16 + blocks) throw CorruptFrameError("corrupt frame: short lossy stream");
  const std::uint64_t code_bytes = get_u64(stream, 0);
  const std::uint64_t exact_count = get_u64(stream, 8);
  const std::size_t orders_at = 16;
  const std::size_t codes_at = orders_at + blocks;
  if (code_bytes > stream.size() || exact_count > stream.size() ||
      codes_at + code_bytes + 8 * exact_count != stream.size())
    throw CorruptFrameError("corrupt frame: inconsistent lossy stream lengths");
  const auto codes = stream.subspan(codes_at, code_bytes);
  std::size_t exact_at = codes_at + code_bytes;
  const std::size_t exact_end = stream.size();

  Vector recon(n);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int order = stream[orders_at + i / kBlockElements];
    if (order != 1 && order != 2) throw CorruptFrameError("corrupt frame: bad predictor order");
    const std::uint64_t code = get_varint(codes, cursor);
    if (code == 0) {
      if (exact_at + 8 > exact_end) throw CorruptFrameError("corrupt frame: missing exact value");
      recon[i] = get_f64(stream, exact_at);
      exact_at += 8;
    } else {
      recon[i] = dequantize(code, predict(recon, i, order), eb);
    }
  }
  if (cursor != codes.size() || exact_at != exact_end)
    throw CorruptFrameError("corrupt frame: trailing bytes in lossy stream");
  return recon;
}

}  // namespace

void CodecSpec::validate() const {
  if (kind == CodecKind::LossyRel && !(eb > 0.0 && eb < 1.0))
    throw ConfigError("lossy relative error bound must lie in (0, 1)");
}

std::string CodecSpec::to_string() const {
  switch (kind) {
    case CodecKind::Identity: return "identity";
    case CodecKind::Lossless: return "lossless";
    case CodecKind::LossyRel: {
      // Shortest representation that parses back to the same double.
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, eb);
      return "lossy:" + std::string(buf, res.ptr);
    }
  }
  return "unknown";
}

CodecSpec CodecSpec::parse(const std::string& s) {
  if (s == "identity") return identity();
  if (s == "lossless") return lossless();
  if (s.rfind("lossy:", 0) == 0) {
    std::size_t used = 0;
    double eb = 0.0;
    try {
      eb = std::stod(s.substr(6), &used);
    } catch (const std::exception&) {
      throw ConfigError("malformed codec '" + s + "'");
    }
    if (used != s.size() - 6) throw ConfigError("malformed codec '" + s + "'");
    CodecSpec spec = lossy_rel(eb);
    spec.validate();
    return spec;
  }
  throw ConfigError("unknown codec '" + s + "' (expected identity|lossless|lossy:<eb>)");
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

void CompressedFrame::serialize_into(std::vector<std::uint8_t>& out) const {
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(codec));
  put_u64(out, count);
  put_f64(out, eb);
  put_u32(out, checksum);
  out.insert(out.end(), payload.begin(), payload.end());
}

std::vector<std::uint8_t> CompressedFrame::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size());
  serialize_into(out);
  return out;
}

CompressedFrame CompressedFrame::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw CorruptFrameError("corrupt frame: truncated header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw CorruptFrameError("corrupt frame: bad magic");
  if (bytes[4] != kVersion)
    throw CorruptFrameError("corrupt frame: unsupported version " + std::to_string(bytes[4]));
  CompressedFrame f;
  f.codec = static_cast<CodecKind>(bytes[5]);
  f.count = get_u64(bytes, 6);
  f.eb = get_f64(bytes, 14);
  f.checksum = get_u32(bytes, 22);
  f.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
  return f;
}

CompressedFrame compress(std::span<const double> data, const CodecSpec& spec) {
  spec.validate();
  require_finite(data, "compress input");
  CompressedFrame f;
  f.codec = spec.kind;
  f.count = data.size();
  switch (spec.kind) {
    case CodecKind::Identity:
      f.payload = raw_bytes(data);
      break;
    case CodecKind::Lossless: {
      const auto raw = raw_bytes(data);
      const auto backend = kDefaultLosslessBackend;
      auto packed = backend == LosslessBackend::ShuffleDeflate ? deflate(shuffle(raw), Z_DEFAULT_COMPRESSION)
                                                               : deflate(raw, Z_DEFAULT_COMPRESSION);
      f.payload.reserve(1 + packed.size());
      f.payload.push_back(static_cast<std::uint8_t>(backend));
      f.payload.insert(f.payload.end(), packed.begin(), packed.end());
      break;
    }
    case CodecKind::LossyRel: {
      f.eb = spec.eb;
      const auto stream = lossy_encode(data, spec.eb);
      put_u64(f.payload, stream.size());
      const auto packed = deflate(stream, Z_BEST_COMPRESSION);
      f.payload.insert(f.payload.end(), packed.begin(), packed.end());
      break;
    }
  }
  f.checksum = crc32(f.payload);
  return f;
}

Vector decompress(const CompressedFrame& f) {
  if (crc32(f.payload) != f.checksum) throw CorruptFrameError("corrupt frame: checksum mismatch");
  if (f.count > (std::numeric_limits<std::size_t>::max() / 8))
    throw CorruptFrameError("corrupt frame: element count out of range");
  const auto n = static_cast<std::size_t>(f.count);
  switch (f.codec) {
    case CodecKind::Identity: {
      if (f.payload.size() != 8 * n) throw CorruptFrameError("corrupt frame: identity payload length");
      Vector out(n);
      for (std::size_t i = 0; i < n; ++i) out[i] = get_f64(f.payload, 8 * i);
      return out;
    }
    case CodecKind::Lossless: {
      if (f.payload.empty()) throw CorruptFrameError("corrupt frame: empty lossless payload");
      const auto backend = static_cast<LosslessBackend>(f.payload[0]);
      const std::span<const std::uint8_t> packed(f.payload.data() + 1, f.payload.size() - 1);
      std::vector<std::uint8_t> raw;
      if (backend == LosslessBackend::Deflate) raw = inflate(packed, 8 * n);
      else if (backend == LosslessBackend::ShuffleDeflate) raw = unshuffle(inflate(packed, 8 * n));
      else throw UnknownCodecError("unknown lossless backend id " + std::to_string(f.payload[0]));
      Vector out(n);
      for (std::size_t i = 0; i < n; ++i) out[i] = get_f64(raw, 8 * i);
      return out;
    }
    case CodecKind::LossyRel: {
      if (f.payload.size() < 8) throw CorruptFrameError("corrupt frame: short lossy payload");
      if (!(f.eb > 0.0 && f.eb < 1.0)) throw CorruptFrameError("corrupt frame: invalid error bound");
      const std::uint64_t stream_len = get_u64(f.payload, 0);
      if (stream_len > 64 * (8 * f.count + 64)) throw CorruptFrameError("corrupt frame: stream length");
      const std::span<const std::uint8_t> packed(f.payload.data() + 8, f.payload.size() - 8);
      const auto stream = inflate(packed, static_cast<std::size_t>(stream_len));
      return lossy_decode(stream, n, f.eb);
    }
  }
  throw UnknownCodecError("unknown codec id " + std::to_string(static_cast<int>(f.codec)));
}

double compression_ratio(const CompressedFrame& f) {
  if (f.count == 0 || f.payload.empty()) return 1.0;
  return 8.0 * static_cast<double>(f.count) / static_cast<double>(f.payload.size());
}

double max_pointwise_relative_error(std::span<const double> original,
                                    std::span<const double> reconstructed) {
  if (original.size() != reconstructed.size()) throw DimensionError("length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double v = original[i];
    const double err = std::abs(v - reconstructed[i]);
    if (std::abs(v) < kExactStorageFloor) {
      if (err != 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, err / std::abs(v));
  }
  return worst;
}

}  // namespace lossyckpt

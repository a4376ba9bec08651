#include "lossyckpt/checkpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <system_error>

#include "json.hpp"
#include "lossyckpt/errors.hpp"

namespace lossyckpt {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::uint8_t kImageMagic[4] = {'L', 'C', 'K', 'I'};
constexpr int kManifestFormat = 1;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

VariableClass parse_class(const std::string& s) {
  if (s == "static") return VariableClass::Static;
  if (s == "dynamic") return VariableClass::Dynamic;
  if (s == "recomputed") return VariableClass::Recomputed;
  throw CorruptFrameError("image manifest: unknown variable class '" + s + "'");
}

PayloadKind parse_kind(const std::string& s) {
  if (s == "vector") return PayloadKind::Vector;
  if (s == "scalar") return PayloadKind::Scalar;
  if (s == "matrix") return PayloadKind::Matrix;
  throw CorruptFrameError("image manifest: unknown payload kind '" + s + "'");
}

void append_frame(CheckpointImage& img, ManifestEntry& e, std::span<const double> data, const CodecSpec& spec) {
  const CompressedFrame f = compress(data, spec);
  e.parts.push_back({img.frames.size(), f.serialized_size()});
  f.serialize_into(img.frames);
}

Vector indices_as_doubles(const auto& idx) {
  Vector out(idx.size());
  std::transform(idx.begin(), idx.end(), out.begin(), [](auto v) { return static_cast<double>(v); });
  return out;
}

Vector read_part(const CheckpointImage& img, const ManifestEntry& e, std::size_t part) {
  const FrameRef& ref = e.parts.at(part);
  if (ref.offset > img.frames.size() || ref.length > img.frames.size() - ref.offset)
    throw CorruptFrameError("image: frame of '" + e.id + "' lies outside the image");
  return decompress(CompressedFrame::parse(std::span(img.frames).subspan(ref.offset, ref.length)));
}

template <class T>
std::vector<T> doubles_as_indices(const Vector& v, const std::string& id) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto t = static_cast<T>(v[i]);
    if (static_cast<double>(t) != v[i]) throw CorruptFrameError("image: bad index in matrix '" + id + "'");
    out[i] = t;
  }
  return out;
}

json manifest_json(const CheckpointImage& img) {
  json entries = json::array();
  for (const auto& e : img.manifest) {
    json parts = json::array();
    for (const auto& p : e.parts) parts.push_back({{"offset", p.offset}, {"length", p.length}});
    json je = {{"id", e.id},
               {"class", to_string(e.cls)},
               {"kind", to_string(e.kind)},
               {"codec", static_cast<int>(e.codec)},
               {"parts", parts}};
    if (e.kind == PayloadKind::Matrix) {
      je["rows"] = e.rows;
      je["cols"] = e.cols;
    }
    entries.push_back(std::move(je));
  }
  return {{"format", kManifestFormat},
          {"iteration", img.iteration},
          {"epoch", img.epoch},
          {"virtual_time", img.virtual_time},
          {"wall_time", img.wall_time},
          {"raw_payload_bytes", img.raw_payload_bytes},
          {"entries", entries}};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::string to_string(VariableClass c) {
  switch (c) {
    case VariableClass::Static: return "static";
    case VariableClass::Dynamic: return "dynamic";
    case VariableClass::Recomputed: return "recomputed";
  }
  return "?";
}

std::string to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::Vector: return "vector";
    case PayloadKind::Scalar: return "scalar";
    case PayloadKind::Matrix: return "matrix";
  }
  return "?";
}

Registry& Registry::protect(std::string id, VariableClass cls, CodecSpec codec, PayloadKind kind,
                            bool regenerate) {
  if (id.empty()) throw Error("protect: empty variable id");
  if (find(id)) throw DuplicateIdError("protect: variable '" + id + "' is already registered");
  codec.validate();
  if (regenerate && cls != VariableClass::Static)
    throw Error("protect: only static variables can be regenerated ('" + id + "')");
  regs_.push_back({std::move(id), cls, codec, kind, regenerate});
  return *this;
}

void Registry::set_codec(const std::string& id, CodecSpec codec) {
  codec.validate();
  for (auto& r : regs_)
    if (r.id == id) {
      r.codec = codec;
      return;
    }
  throw Error("set_codec: unknown variable '" + id + "'");
}

const Registration* Registry::find(const std::string& id) const {
  for (const auto& r : regs_)
    if (r.id == id) return &r;
  return nullptr;
}

bool Registry::needs_epoch_image() const {
  return std::any_of(regs_.begin(), regs_.end(),
                     [](const Registration& r) { return r.cls == VariableClass::Static && !r.regenerate; });
}

CheckpointImage build_image(const Registry& registry, std::size_t iteration, const Bindings& values,
                            VariableClass cls, double virtual_time, double wall_time) {
  CheckpointImage img;
  img.iteration = iteration;
  img.epoch = cls == VariableClass::Static;
  img.virtual_time = virtual_time;
  img.wall_time = wall_time;
  if (cls == VariableClass::Recomputed) throw Error("build_image: recomputed variables are never stored");

  for (const auto& reg : registry.registrations()) {
    if (reg.cls != cls || reg.regenerate) continue;
    auto it = values.find(reg.id);
    if (it == values.end()) throw Error("build_image: no value bound for '" + reg.id + "'");
    ManifestEntry e;
    e.id = reg.id;
    e.cls = reg.cls;
    e.kind = reg.kind;
    switch (reg.kind) {
      case PayloadKind::Scalar: {
        const double* v = std::get_if<double>(&it->second);
        if (!v) throw Error("build_image: '" + reg.id + "' is registered as a scalar");
        e.codec = CodecKind::Identity;
        append_frame(img, e, std::span(v, 1), CodecSpec::identity());
        break;
      }
      case PayloadKind::Vector: {
        const Vector* v = std::get_if<Vector>(&it->second);
        if (!v) throw Error("build_image: '" + reg.id + "' is registered as a vector");
        e.codec = reg.codec.kind;
        append_frame(img, e, *v, reg.codec);
        img.raw_payload_bytes += v->size() * sizeof(double);
        break;
      }
      case PayloadKind::Matrix: {
        const CsrMatrix* m = std::get_if<CsrMatrix>(&it->second);
        if (!m) throw Error("build_image: '" + reg.id + "' is registered as a matrix");
        e.codec = reg.codec.kind;
        e.rows = m->nrows();
        e.cols = m->ncols();
        // Structure must survive exactly whatever the value codec is.
        const CodecSpec structure = reg.codec.kind == CodecKind::Identity ? CodecSpec::identity()
                                                                          : CodecSpec::lossless();
        append_frame(img, e, indices_as_doubles(m->row_ptr()), structure);
        append_frame(img, e, indices_as_doubles(m->col_idx()), structure);
        append_frame(img, e, m->values(), reg.codec);
        img.raw_payload_bytes += m->values().size() * sizeof(double) +
                                 m->col_idx().size() * sizeof(index_t) +
                                 m->row_ptr().size() * sizeof(std::int64_t);
        break;
      }
    }
    img.manifest.push_back(std::move(e));
  }
  img.manifest_bytes = manifest_json(img).dump().size();
  return img;
}

std::vector<std::uint8_t> CheckpointImage::serialize() const {
  const std::string manifest = manifest_json(*this).dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPreludeBytes + manifest.size() + frames.size());
  out.insert(out.end(), std::begin(kImageMagic), std::end(kImageMagic));
  put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), frames.begin(), frames.end());
  return out;
}

CheckpointImage CheckpointImage::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreludeBytes || !std::equal(std::begin(kImageMagic), std::end(kImageMagic), bytes.begin()))
    throw CorruptFrameError("image: bad magic or truncated prelude");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
  if (len > bytes.size() - kPreludeBytes) throw CorruptFrameError("image: manifest exceeds image size");

  CheckpointImage img;
  try {
    const auto text = bytes.subspan(kPreludeBytes, len);
    const json m = json::parse(text.begin(), text.end());
    if (m.at("format").get<int>() != kManifestFormat) throw CorruptFrameError("image: unsupported manifest format");
    img.iteration = m.at("iteration").get<std::size_t>();
    img.epoch = m.at("epoch").get<bool>();
    img.virtual_time = m.at("virtual_time").get<double>();
    img.wall_time = m.at("wall_time").get<double>();
    img.raw_payload_bytes = m.at("raw_payload_bytes").get<std::size_t>();
    for (const auto& je : m.at("entries")) {
      ManifestEntry e;
      e.id = je.at("id").get<std::string>();
      e.cls = parse_class(je.at("class").get<std::string>());
      e.kind = parse_kind(je.at("kind").get<std::string>());
      const int codec = je.at("codec").get<int>();
      if (codec < 0 || codec > static_cast<int>(CodecKind::LossyRel))
        throw UnknownCodecError("image: unknown codec id " + std::to_string(codec));
      e.codec = static_cast<CodecKind>(codec);
      if (e.kind == PayloadKind::Matrix) {
        e.rows = je.at("rows").get<std::uint64_t>();
        e.cols = je.at("cols").get<std::uint64_t>();
      }
      for (const auto& p : je.at("parts"))
        e.parts.push_back({p.at("offset").get<std::uint64_t>(), p.at("length").get<std::uint64_t>()});
      const std::size_t want = e.kind == PayloadKind::Matrix ? 3 : 1;
      if (e.parts.size() != want) throw CorruptFrameError("image: wrong frame count for '" + e.id + "'");
      img.manifest.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw CorruptFrameError(std::string("image: malformed manifest: ") + ex.what());
  }
  img.manifest_bytes = len;
  img.frames.assign(bytes.begin() + kPreludeBytes + len, bytes.end());
  return img;
}

Bindings CheckpointImage::decode() const {
  Bindings out;
  for (const auto& e : manifest) {
    switch (e.kind) {
      case PayloadKind::Scalar: {
        const Vector v = read_part(*this, e, 0);
        if (v.size() != 1) throw CorruptFrameError("image: scalar '" + e.id + "' has " + std::to_string(v.size()) + " elements");
        out[e.id] = v[0];
        break;
      }
      case PayloadKind::Vector: out[e.id] = read_part(*this, e, 0); break;
      case PayloadKind::Matrix: {
        auto row_ptr = doubles_as_indices<std::int64_t>(read_part(*this, e, 0), e.id);
        auto col_idx = doubles_as_indices<index_t>(read_part(*this, e, 1), e.id);
        Vector values = read_part(*this, e, 2);
        try {
          out[e.id] = CsrMatrix(static_cast<std::size_t>(e.rows), static_cast<std::size_t>(e.cols),
                                std::move(row_ptr), std::move(col_idx), std::move(values));
        } catch (const DimensionError& ex) {
          throw CorruptFrameError("image: matrix '" + e.id + "' is inconsistent: " + ex.what());
        }
        break;
      }
    }
  }
  return out;
}

double Store::transfer_seconds(std::size_t) const { return 0.0; }

DirectoryStore::DirectoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StorageError("cannot create checkpoint directory " + dir_.string() + ": " + ec.message());
}

void DirectoryStore::put(const std::string& name, std::span<const std::uint8_t> bytes) {
  const auto final_path = dir_ / name;
  const auto tmp_path = dir_ / (name + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + tmp_path.string() + " for writing");
    std::size_t n = bytes.size();
    if (fail_after_) n = std::min(n, *fail_after_);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(n));
    out.flush();
    if (!out) throw StorageError("write failed for " + tmp_path.string());
    if (fail_after_) {
      fail_after_.reset();
      throw StorageError("injected crash after " + std::to_string(n) + " bytes of " + name);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) throw StorageError("cannot commit " + final_path.string() + ": " + ec.message());
}

std::optional<std::vector<std::uint8_t>> DirectoryStore::get(const std::string& name) const {
  std::ifstream in(dir_ / name, std::ios::binary);
  if (!in) return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void DirectoryStore::remove(const std::string& name) {
  std::error_code ec;
  std::filesystem::remove(dir_ / name, ec);
}

void DirectoryStore::set_latest(const std::string& name) {
  put("latest", std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
}

std::optional<std::string> DirectoryStore::latest() const {
  auto bytes = get("latest");
  if (!bytes) return std::nullopt;
  return std::string(bytes->begin(), bytes->end());
}

void MemoryStore::put(const std::string& name, std::span<const std::uint8_t> bytes) {
  blobs_[name].assign(bytes.begin(), bytes.end());
  written_ += bytes.size();
}

std::optional<std::vector<std::uint8_t>> MemoryStore::get(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) return std::nullopt;
  return it->second;
}

void MemoryStore::remove(const std::string& name) { blobs_.erase(name); }
void MemoryStore::set_latest(const std::string& name) { latest_ = name; }
std::optional<std::string> MemoryStore::latest() const { return latest_; }

double MemoryStore::transfer_seconds(std::size_t bytes) const {
  return bandwidth_ > 0.0 ? static_cast<double>(bytes) / bandwidth_ : 0.0;
}

std::string checkpoint_name(std::size_t iteration) { return "ckpt_" + std::to_string(iteration) + ".img"; }

SnapshotResult snapshot(Registry& registry, std::size_t iteration, const Bindings& values, Store& store,
                        double virtual_time, double wall_time) {
  SnapshotResult res;
  const auto t0 = Clock::now();
  if (registry.needs_epoch_image() && !registry.epoch_written()) {
    const auto epoch = build_image(registry, iteration, values, VariableClass::Static, virtual_time, wall_time);
    const auto bytes = epoch.serialize();
    store.put(kEpochImageName, bytes);
    registry.mark_epoch_written();
    res.wrote_epoch = true;
    res.epoch_bytes = bytes.size();
  }
  res.image = build_image(registry, iteration, values, VariableClass::Dynamic, virtual_time, wall_time);
  const auto bytes = res.image.serialize();
  res.seconds = seconds_since(t0);
  res.name = checkpoint_name(iteration);
  const auto previous = store.latest();
  store.put(res.name, bytes);
  store.set_latest(res.name);
  if (previous && *previous != res.name) store.remove(*previous);
  res.bytes = bytes.size() + res.epoch_bytes;
  return res;
}

RestoreResult restore(const Store& store, const Registry& registry) {
  RestoreResult res;
  const auto t0 = Clock::now();
  for (const auto& r : registry.registrations())
    if (r.regenerate) res.regenerate.push_back(r.id);

  const auto name = store.latest();
  if (!name) {
    res.from_scratch = true;
    res.seconds = seconds_since(t0);
    return res;
  }
  const auto bytes = store.get(*name);
  if (!bytes) throw StorageError("restore: latest marker names missing image '" + *name + "'");
  const auto img = CheckpointImage::parse(*bytes);
  res.iteration = img.iteration;
  res.values = img.decode();
  res.bytes_read = bytes->size();

  if (registry.needs_epoch_image()) {
    const auto epoch_bytes = store.get(kEpochImageName);
    if (!epoch_bytes) throw StorageError("restore: epoch image is missing");
    auto statics = CheckpointImage::parse(*epoch_bytes).decode();
    res.values.merge(statics);
    res.bytes_read += epoch_bytes->size();
  }
  for (const auto& r : registry.registrations()) {
    if (r.cls == VariableClass::Recomputed || r.regenerate) continue;
    if (!res.values.contains(r.id)) throw CorruptFrameError("restore: image lacks variable '" + r.id + "'");
  }
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace lossyckpt

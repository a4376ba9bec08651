#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lossyckpt/codec.hpp"
#include "lossyckpt/sparse.hpp"

namespace lossyckpt {

/// Static variables are stored once, dynamic ones at every checkpoint, and
/// recomputed ones are never serialized (rebuilt from the others on restart).
enum class VariableClass { Static, Dynamic, Recomputed };
enum class PayloadKind { Vector, Scalar, Matrix };

std::string to_string(VariableClass c);
std::string to_string(PayloadKind k);

struct Registration {
  std::string id;
  VariableClass cls = VariableClass::Dynamic;
  CodecSpec codec;
  PayloadKind kind = PayloadKind::Vector;
  /// Static only: rebuilt by the application on restore instead of being
  /// written to the epoch image.
  bool regenerate = false;
};

using Value = std::variant<double, Vector, CsrMatrix>;
using Bindings = std::map<std::string, Value>;

/// Set of protected variables. Single owner; not thread-safe.
class Registry {
 public:
  /// Throws DuplicateIdError when `id` is already registered.
  Registry& protect(std::string id, VariableClass cls, CodecSpec codec = CodecSpec::identity(),
                    PayloadKind kind = PayloadKind::Vector, bool regenerate = false);
  /// Changes the codec of a registered variable (adaptive error bounds).
  void set_codec(const std::string& id, CodecSpec codec);

  const std::vector<Registration>& registrations() const noexcept { return regs_; }
  const Registration* find(const std::string& id) const;

  /// Whether any static variable must be written to the epoch image.
  bool needs_epoch_image() const;
  bool epoch_written() const noexcept { return epoch_written_; }
  void mark_epoch_written() noexcept { epoch_written_ = true; }

 private:
  std::vector<Registration> regs_;
  bool epoch_written_ = false;
};

/// One stored frame of a manifest entry; matrices use three parts
/// (row_ptr, col_idx, values).
struct FrameRef {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct ManifestEntry {
  std::string id;
  VariableClass cls = VariableClass::Dynamic;
  PayloadKind kind = PayloadKind::Vector;
  CodecKind codec = CodecKind::Identity;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<FrameRef> parts;
};

/// Serialized snapshot of registered variables at one iteration.
///
/// Layout: magic "LCKI", u32 manifest length, manifest JSON, then the
/// concatenated CompressedFrames. Frame offsets are relative to the first
/// byte after the manifest.
struct CheckpointImage {
  std::size_t iteration = 0;
  bool epoch = false;
  double virtual_time = 0.0;
  double wall_time = 0.0;
  std::vector<ManifestEntry> manifest;
  std::vector<std::uint8_t> frames;
  std::size_t manifest_bytes = 0;
  /// Raw (uncompressed) bytes of the vector and matrix payloads.
  std::size_t raw_payload_bytes = 0;

  static constexpr std::size_t kPreludeBytes = 8;

  /// prelude + manifest + every frame, bit-exact with serialize().size().
  std::size_t size_bytes() const { return kPreludeBytes + manifest_bytes + frames.size(); }
  std::vector<std::uint8_t> serialize() const;
  static CheckpointImage parse(std::span<const std::uint8_t> bytes);
  /// Decodes every stored variable.
  Bindings decode() const;
};

/// Builds an image holding the registered variables of class `cls`.
/// Recomputed variables are never included and Scalars are stored exactly.
/// Throws Error when a required binding is missing or has the wrong kind.
CheckpointImage build_image(const Registry& registry, std::size_t iteration, const Bindings& values,
                            VariableClass cls, double virtual_time = 0.0, double wall_time = 0.0);

/// Durable storage for checkpoint images.
class Store {
 public:
  virtual ~Store() = default;
  /// Atomic: either the complete image becomes visible under `name` or the
  /// previous content (if any) is left untouched.
  virtual void put(const std::string& name, std::span<const std::uint8_t> bytes) = 0;
  virtual std::optional<std::vector<std::uint8_t>> get(const std::string& name) const = 0;
  virtual void remove(const std::string& name) = 0;
  /// Atomically points the `latest` marker at `name`.
  virtual void set_latest(const std::string& name) = 0;
  virtual std::optional<std::string> latest() const = 0;
  /// Synthetic transfer cost of `bytes`; 0 for stores measured in real time.
  virtual double transfer_seconds(std::size_t bytes) const;
};

/// Directory-per-run filesystem store: epoch.img, ckpt_<iter>.img and a
/// `latest` marker, all written to a temporary file and renamed on commit.
class DirectoryStore final : public Store {
 public:
  explicit DirectoryStore(std::filesystem::path dir);
  void put(const std::string& name, std::span<const std::uint8_t> bytes) override;
  std::optional<std::vector<std::uint8_t>> get(const std::string& name) const override;
  void remove(const std::string& name) override;
  void set_latest(const std::string& name) override;
  std::optional<std::string> latest() const override;
  const std::filesystem::path& dir() const noexcept { return dir_; }

  /// Test hook: the next put() writes only `bytes` bytes to its temporary
  /// file and then throws StorageError, emulating a crash mid-write.
  void fail_next_put_after(std::size_t bytes) { fail_after_ = bytes; }

 private:
  std::filesystem::path dir_;
  std::optional<std::size_t> fail_after_;
};

/// In-memory store with a synthetic bandwidth, used by the virtual clock.
class MemoryStore final : public Store {
 public:
  /// bandwidth in bytes/second; <= 0 means free transfers.
  explicit MemoryStore(double bandwidth = 0.0) : bandwidth_(bandwidth) {}
  void put(const std::string& name, std::span<const std::uint8_t> bytes) override;
  std::optional<std::vector<std::uint8_t>> get(const std::string& name) const override;
  void remove(const std::string& name) override;
  void set_latest(const std::string& name) override;
  std::optional<std::string> latest() const override;
  double transfer_seconds(std::size_t bytes) const override;
  std::size_t total_bytes_written() const noexcept { return written_; }

 private:
  double bandwidth_;
  std::map<std::string, std::vector<std::uint8_t>> blobs_;
  std::optional<std::string> latest_;
  std::size_t written_ = 0;
};

std::string checkpoint_name(std::size_t iteration);
inline constexpr const char* kEpochImageName = "epoch.img";

struct SnapshotResult {
  CheckpointImage image;
  std::string name;
  bool wrote_epoch = false;
  std::size_t epoch_bytes = 0;
  /// Total bytes committed by this call (epoch image included).
  std::size_t bytes = 0;
  /// Measured serialize + compress wall time.
  double seconds = 0.0;
};

/// Writes the epoch image on first use (static variables only), then the
/// dynamic image for `iteration`, and moves the `latest` marker to it. The
/// previous dynamic image is removed after the marker moves.
SnapshotResult snapshot(Registry& registry, std::size_t iteration, const Bindings& values, Store& store,
                        double virtual_time = 0.0, double wall_time = 0.0);

struct RestoreResult {
  /// No checkpoint exists: restart the computation from scratch.
  bool from_scratch = false;
  std::size_t iteration = 0;
  Bindings values;
  /// Static variables the caller must regenerate.
  std::vector<std::string> regenerate;
  std::size_t bytes_read = 0;
  double seconds = 0.0;
};

/// Loads the latest dynamic image plus the epoch image. Recomputed
/// variables are left to the solver. Throws CorruptFrameError on a damaged
/// image and StorageError on a missing one referenced by the marker.
RestoreResult restore(const Store& store, const Registry& registry);

}  // namespace lossyckpt

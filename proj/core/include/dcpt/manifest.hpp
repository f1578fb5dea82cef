#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcpt/keyframe.hpp"
#include "dcpt/random.hpp"

namespace dcpt {

enum class Split { train, val, test };
enum class Regime { K, K_aug, N, K_plus_N };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view text);
std::string_view regime_name(Regime regime);
std::optional<Regime> parse_regime(std::string_view text);

struct ManifestEntry {
  std::string video_id;
  std::size_t frame_index = 0;
  FrameKind frame_kind = FrameKind::I;
  int label = 0;  // 0 real, 1 fake
  Split split = Split::train;
  std::string image_path;
  // K_aug expansion copy: 0 is the frame as stored, 1 and 2 are re-augmented
  // every time they are loaded for training.
  int augment_copy = 0;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

struct VideoLabel {
  int label = 0;
  Split split = Split::train;
};

/// Lines "video_id,label[,split]"; label is real|fake|0|1, split defaults to
/// train. Blank lines and lines starting with '#' are skipped.
std::map<std::string, VideoLabel> parse_labels(std::string_view text);
std::map<std::string, VideoLabel> read_labels(const std::filesystem::path& path);

struct ManifestOptions {
  Regime regime = Regime::K;
  // Normal frames drawn per real video for every one drawn per fake video.
  std::size_t real_normal_multiplier = 3;
  std::size_t normal_per_video = 1;
  std::size_t augment_copies = 3;
  bool balance = true;
  bool check_files = true;
};

/// Video id of a keyframe report: the file stem of its source.
std::string video_id_of(const FrameIndexReport& report);

/// Frames are expected at frames_dir/videos/<video_id>/<frame_index>.png.
/// Entries come out grouped by video (in labels order), then frame index.
Manifest build_manifest(const std::filesystem::path& frames_dir, const std::map<std::string, VideoLabel>& labels,
                        const std::vector<FrameIndexReport>& reports, const ManifestOptions& options,
                        const RandomSource& rng);

/// Drops majority-class entries of each split (seeded) until the classes are
/// equal whenever they differ by more than 10%. Order is preserved.
Manifest balance_classes(Manifest manifest, RandomSource rng);

std::string manifest_to_jsonl(const Manifest& manifest);
Manifest manifest_from_jsonl(std::string_view text);
Manifest read_manifest(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dcpt

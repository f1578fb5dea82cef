#pragma once

// Keyframe (I-frame) identification from compressed video, without decoding
// pixels. Two independent routes: the MP4 sync-sample table (stss) and the
// NAL unit types of a raw H.264 Annex B elementary stream.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcpt/errors.hpp"

namespace dcpt {

enum class FrameKind { I, nonI };

std::string_view frame_kind_name(FrameKind kind);

struct FrameEntry {
  std::size_t frame_index = 0;  // 0-based, decode order
  FrameKind kind = FrameKind::nonI;

  bool operator==(const FrameEntry&) const = default;
};

struct FrameIndexReport {
  std::string source;
  std::size_t total_frames = 0;
  std::vector<FrameEntry> entries;

  std::vector<std::size_t> keyframe_indices() const;
};

struct Mp4BoxHeader {
  std::uint64_t offset = 0;  // absolute offset of the box start
  std::uint64_t size = 0;    // whole box including header
  std::size_t header_size = 8;
  std::array<char, 4> type{};

  std::string type_name() const { return std::string(type.data(), 4); }
  std::uint64_t payload_offset() const { return offset + header_size; }
  std::uint64_t end() const { return offset + size; }
};

/// Reads the box header at `offset` in bytes[.. limit). Supports 64-bit
/// extended sizes (size == 1) and size == 0 (box runs to `limit`).
/// Throws FormatError on truncation or a size that overruns `limit`.
Mp4BoxHeader read_box_header(std::span<const std::uint8_t> bytes, std::uint64_t offset, std::uint64_t limit);

/// Walks moov/trak/mdia/minf/stbl of the first video track. Sample count
/// comes from stsz (or stz2); stss lists 1-based sync samples. Without stss
/// every sample is a sync sample. One sample per frame is assumed.
FrameIndexReport parse_mp4_keyframes(std::span<const std::uint8_t> bytes, std::string source = "");

struct NalUnit {
  std::size_t offset = 0;  // first byte after the start code
  std::size_t size = 0;
  int type = 0;
};

/// Splits on 3- and 4-byte start codes. Trailing zero bytes before the next
/// start code are not part of a unit.
std::vector<NalUnit> split_nal_units(std::span<const std::uint8_t> bytes);

/// Groups VCL units (types 1 and 5) into access units: a new one starts at
/// each slice whose first_mb_in_slice is 0. Units holding an IDR slice are I.
FrameIndexReport parse_annexb_frames(std::span<const std::uint8_t> bytes, std::string source = "");

enum class VideoFormat { automatic, mp4, annexb };

/// 'ftyp' in the first 12 bytes -> mp4; leading start code -> annexb.
VideoFormat sniff_format(std::span<const std::uint8_t> bytes);

FrameIndexReport classify_frames(const std::filesystem::path& path, VideoFormat hint = VideoFormat::automatic);

/// Header object {"source", "total_frames"} then one {"frame_index", "kind"} per line.
std::string report_to_jsonl(const FrameIndexReport& report);
FrameIndexReport report_from_jsonl(std::string_view text);

}  // namespace dcpt

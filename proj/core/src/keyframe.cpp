#include "dcpt/keyframe.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace dcpt {

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::uint64_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::uint64_t be64(std::span<const std::uint8_t> b, std::uint64_t at) {
  return (std::uint64_t{be32(b, at)} << 32) | be32(b, at + 4);
}

std::string hex_offset(std::uint64_t off) {
  std::ostringstream os;
  os << off << " (0x" << std::hex << off << ")";
  return os.str();
}

bool is_type(const Mp4BoxHeader& h, const char* t) { return std::equal(h.type.begin(), h.type.end(), t); }

// First child of `parent` with the given type, or nullopt.
std::optional<Mp4BoxHeader> find_child(std::span<const std::uint8_t> bytes, std::uint64_t begin, std::uint64_t end,
                                       const char* type) {
  std::uint64_t off = begin;
  while (off < end) {
    auto h = read_box_header(bytes, off, end);
    if (is_type(h, type)) return h;
    off = h.end();
  }
  return std::nullopt;
}

Mp4BoxHeader require_child(std::span<const std::uint8_t> bytes, const Mp4BoxHeader& parent, const char* type) {
  auto h = find_child(bytes, parent.payload_offset(), parent.end(), type);
  if (!h) {
    throw FormatError("missing '" + std::string(type) + "' box inside '" + parent.type_name() + "' at offset " +
                      hex_offset(parent.offset));
  }
  return *h;
}

void require_payload(const Mp4BoxHeader& h, std::uint64_t needed) {
  if (h.size - h.header_size < needed) {
    throw FormatError("'" + h.type_name() + "' box at offset " + hex_offset(h.offset) + " is truncated: needs " +
                      std::to_string(needed) + " payload bytes, has " + std::to_string(h.size - h.header_size));
  }
}

bool is_video_track(std::span<const std::uint8_t> bytes, const Mp4BoxHeader& trak) {
  auto mdia = find_child(bytes, trak.payload_offset(), trak.end(), "mdia");
  if (!mdia) return false;
  auto hdlr = find_child(bytes, mdia->payload_offset(), mdia->end(), "hdlr");
  if (!hdlr) return false;
  require_payload(*hdlr, 12);
  const auto at = hdlr->payload_offset() + 8;
  return bytes[at] == 'v' && bytes[at + 1] == 'i' && bytes[at + 2] == 'd' && bytes[at + 3] == 'e';
}

// Reads unsigned Exp-Golomb values from an RBSP with emulation-prevention
// bytes (00 00 03) skipped.
class RbspBitReader {
 public:
  explicit RbspBitReader(std::span<const std::uint8_t> nal) {
    int zeros = 0;
    for (auto byte : nal) {
      if (zeros >= 2 && byte == 0x03) {
        zeros = 0;
        continue;
      }
      zeros = byte == 0 ? zeros + 1 : 0;
      rbsp_.push_back(byte);
    }
  }

  std::optional<std::uint32_t> read_ue() {
    int leading = 0;
    while (true) {
      auto bit = read_bit();
      if (!bit) return std::nullopt;
      if (*bit) break;
      if (++leading > 31) return std::nullopt;
    }
    std::uint32_t suffix = 0;
    for (int i = 0; i < leading; ++i) {
      auto bit = read_bit();
      if (!bit) return std::nullopt;
      suffix = (suffix << 1) | *bit;
    }
    return (std::uint32_t{1} << leading) - 1 + suffix;
  }

 private:
  std::optional<std::uint32_t> read_bit() {
    if (pos_ >= rbsp_.size() * 8) return std::nullopt;
    const std::uint32_t bit = (rbsp_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
  }

  std::vector<std::uint8_t> rbsp_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view frame_kind_name(FrameKind kind) { return kind == FrameKind::I ? "I" : "nonI"; }

std::vector<std::size_t> FrameIndexReport::keyframe_indices() const {
  std::vector<std::size_t> out;
  for (const auto& e : entries) {
    if (e.kind == FrameKind::I) out.push_back(e.frame_index);
  }
  return out;
}

Mp4BoxHeader read_box_header(std::span<const std::uint8_t> bytes, std::uint64_t offset, std::uint64_t limit) {
  limit = std::min<std::uint64_t>(limit, bytes.size());
  if (offset + 8 > limit) {
    throw FormatError("truncated box header at offset " + hex_offset(offset) + ": only " +
                      std::to_string(limit - std::min(offset, limit)) + " bytes remain");
  }
  Mp4BoxHeader h;
  h.offset = offset;
  h.size = be32(bytes, offset);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset + 4), 4, h.type.begin());
  if (h.size == 1) {
    if (offset + 16 > limit) {
      throw FormatError("truncated extended size of '" + h.type_name() + "' box at offset " + hex_offset(offset));
    }
    h.size = be64(bytes, offset + 8);
    h.header_size = 16;
  } else if (h.size == 0) {
    h.size = limit - offset;
  }
  if (h.size < h.header_size) {
    throw FormatError("'" + h.type_name() + "' box at offset " + hex_offset(offset) + " declares size " +
                      std::to_string(h.size) + ", smaller than its header");
  }
  if (h.size > limit - offset) {
    throw FormatError("'" + h.type_name() + "' box at offset " + hex_offset(offset) + " declares size " +
                      std::to_string(h.size) + " but only " + std::to_string(limit - offset) +
                      " bytes are available (truncated)");
  }
  return h;
}

FrameIndexReport parse_mp4_keyframes(std::span<const std::uint8_t> bytes, std::string source) {
  if (bytes.empty()) throw FormatError("empty MP4 input");
  const std::uint64_t end = bytes.size();

  // Validate every top-level box, remembering moov.
  std::optional<Mp4BoxHeader> moov;
  for (std::uint64_t off = 0; off < end;) {
    auto h = read_box_header(bytes, off, end);
    if (is_type(h, "moov") && !moov) moov = h;
    off = h.end();
  }
  if (!moov) throw FormatError("no 'moov' box found");

  std::optional<Mp4BoxHeader> trak;
  for (std::uint64_t off = moov->payload_offset(); off < moov->end();) {
    auto h = read_box_header(bytes, off, moov->end());
    if (is_type(h, "trak") && is_video_track(bytes, h)) {
      trak = h;
      break;
    }
    off = h.end();
  }
  if (!trak) throw FormatError("no video track ('trak' with a 'vide' handler) inside 'moov'");

  auto mdia = require_child(bytes, *trak, "mdia");
  auto minf = require_child(bytes, mdia, "minf");
  auto stbl = require_child(bytes, minf, "stbl");

  std::uint64_t sample_count = 0;
  if (auto stsz = find_child(bytes, stbl.payload_offset(), stbl.end(), "stsz")) {
    require_payload(*stsz, 12);
    const auto p = stsz->payload_offset();
    const std::uint32_t sample_size = be32(bytes, p + 4);
    sample_count = be32(bytes, p + 8);
    if (sample_size == 0) require_payload(*stsz, 12 + 4 * sample_count);
  } else if (auto stz2 = find_child(bytes, stbl.payload_offset(), stbl.end(), "stz2")) {
    require_payload(*stz2, 12);
    sample_count = be32(bytes, stz2->payload_offset() + 8);
  } else {
    throw FormatError("missing 'stsz' box inside 'stbl' at offset " + hex_offset(stbl.offset));
  }
  if (sample_count == 0) throw FormatError("video track declares a sample count of zero");

  FrameIndexReport report;
  report.source = std::move(source);
  report.total_frames = sample_count;
  report.entries.resize(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) report.entries[i] = {i, FrameKind::nonI};

  auto stss = find_child(bytes, stbl.payload_offset(), stbl.end(), "stss");
  if (!stss) {
    for (auto& e : report.entries) e.kind = FrameKind::I;
    return report;
  }
  require_payload(*stss, 8);
  const auto p = stss->payload_offset();
  const std::uint32_t entries = be32(bytes, p + 4);
  require_payload(*stss, 8 + 4 * std::uint64_t{entries});
  std::uint32_t previous = 0;
  for (std::uint32_t i = 0; i < entries; ++i) {
    const std::uint32_t sample = be32(bytes, p + 8 + 4 * std::uint64_t{i});
    if (sample == 0 || sample > sample_count || sample <= previous) {
      throw FormatError("'stss' entry " + std::to_string(i) + " (sample " + std::to_string(sample) +
                        ") is out of order or outside 1.." + std::to_string(sample_count) +
                        "; only one sample per frame is supported");
    }
    report.entries[sample - 1].kind = FrameKind::I;
    previous = sample;
  }
  return report;
}

std::vector<NalUnit> split_nal_units(std::span<const std::uint8_t> bytes) {
  std::vector<std::size_t> starts;  // offsets just after each start code
  std::vector<std::size_t> code_begin;
  for (std::size_t i = 0; i + 2 < bytes.size(); ++i) {
    if (bytes[i] == 0 && bytes[i + 1] == 0 && bytes[i + 2] == 1) {
      code_begin.push_back(i);
      starts.push_back(i + 3);
      i += 2;
    }
  }
  if (starts.empty()) throw FormatError("no start code found in Annex B stream");
  for (std::size_t i = 0; i < code_begin.front(); ++i) {
    if (bytes[i] != 0) throw FormatError("non-zero bytes before the first start code");
  }
  std::vector<NalUnit> units;
  for (std::size_t u = 0; u < starts.size(); ++u) {
    const std::size_t begin = starts[u];
    std::size_t end = u + 1 < starts.size() ? code_begin[u + 1] : bytes.size();
    while (end > begin && bytes[end - 1] == 0) --end;
    if (end == begin) throw FormatError("empty NAL unit at offset " + hex_offset(begin));
    if (bytes[begin] & 0x80) throw FormatError("forbidden_zero_bit set in NAL unit at offset " + hex_offset(begin));
    units.push_back({begin, end - begin, bytes[begin] & 0x1f});
  }
  return units;
}

FrameIndexReport parse_annexb_frames(std::span<const std::uint8_t> bytes, std::string source) {
  const auto units = split_nal_units(bytes);
  std::vector<bool> access_units;  // true when the unit holds an IDR slice
  for (const auto& nal : units) {
    if (nal.type != 1 && nal.type != 5) continue;
    RbspBitReader reader(bytes.subspan(nal.offset + 1, nal.size - 1));
    auto first_mb = reader.read_ue();
    if (!first_mb) {
      throw FormatError("slice header truncated in NAL unit at offset " + hex_offset(nal.offset));
    }
    if (*first_mb == 0 || access_units.empty()) access_units.push_back(false);
    if (nal.type == 5) access_units.back() = true;
  }
  if (access_units.empty()) throw FormatError("no VCL NAL unit (type 1 or 5) in Annex B stream");

  FrameIndexReport report;
  report.source = std::move(source);
  report.total_frames = access_units.size();
  for (std::size_t i = 0; i < access_units.size(); ++i) {
    report.entries.push_back({i, access_units[i] ? FrameKind::I : FrameKind::nonI});
  }
  return report;
}

VideoFormat sniff_format(std::span<const std::uint8_t> bytes) {
  const std::size_t window = std::min<std::size_t>(bytes.size(), 12);
  for (std::size_t i = 0; i + 4 <= window; ++i) {
    if (bytes[i] == 'f' && bytes[i + 1] == 't' && bytes[i + 2] == 'y' && bytes[i + 3] == 'p') return VideoFormat::mp4;
  }
  if (bytes.size() >= 3 && bytes[0] == 0 && bytes[1] == 0 && bytes[2] == 1) return VideoFormat::annexb;
  if (bytes.size() >= 4 && bytes[0] == 0 && bytes[1] == 0 && bytes[2] == 0 && bytes[3] == 1) {
    return VideoFormat::annexb;
  }
  throw FormatError("unrecognised video format (neither MP4 'ftyp' nor an Annex B start code)");
}

FrameIndexReport classify_frames(const std::filesystem::path& path, VideoFormat hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const VideoFormat format = hint == VideoFormat::automatic ? sniff_format(bytes) : hint;
  return format == VideoFormat::mp4 ? parse_mp4_keyframes(bytes, path.string())
                                    : parse_annexb_frames(bytes, path.string());
}

std::string report_to_jsonl(const FrameIndexReport& report) {
  std::string out;
  nlohmann::ordered_json header;
  header["source"] = report.source;
  header["total_frames"] = report.total_frames;
  out += header.dump() + "\n";
  for (const auto& e : report.entries) {
    nlohmann::ordered_json line;
    line["frame_index"] = e.frame_index;
    line["kind"] = std::string(frame_kind_name(e.kind));
    out += line.dump() + "\n";
  }
  return out;
}

FrameIndexReport report_from_jsonl(std::string_view text) {
  FrameIndexReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line);
      if (!have_header) {
        report.source = j.at("source").get<std::string>();
        report.total_frames = j.at("total_frames").get<std::size_t>();
        have_header = true;
        continue;
      }
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "I" && kind != "nonI") throw DataError("unknown frame kind '" + kind + "'");
      report.entries.push_back({j.at("frame_index").get<std::size_t>(), kind == "I" ? FrameKind::I : FrameKind::nonI});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("keyframe report line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_header) throw DataError("keyframe report has no header line");
  if (report.entries.size() != report.total_frames) {
    throw DataError("keyframe report lists " + std::to_string(report.entries.size()) + " frames, header says " +
                    std::to_string(report.total_frames));
  }
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    if (report.entries[i].frame_index != i) throw DataError("keyframe report indices are not 0..n-1 in order");
  }
  return report;
}

}  // namespace dcpt

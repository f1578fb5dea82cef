#include "dcpt/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace dcpt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void require_unique(const Manifest& m) {
  std::set<std::tuple<std::string, std::size_t, int>> seen;
  for (const auto& e : m) {
    if (!seen.emplace(e.video_id, e.frame_index, e.augment_copy).second) {
      throw DataError("duplicate manifest entry " + e.video_id + "/" + std::to_string(e.frame_index));
    }
  }
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  return std::nullopt;
}

std::string_view regime_name(Regime regime) {
  switch (regime) {
    case Regime::K: return "K";
    case Regime::K_aug: return "K_aug";
    case Regime::N: return "N";
    case Regime::K_plus_N: return "K_plus_N";
  }
  return "K";
}

std::optional<Regime> parse_regime(std::string_view text) {
  for (auto r : {Regime::K, Regime::K_aug, Regime::N, Regime::K_plus_N}) {
    if (text == regime_name(r)) return r;
  }
  return std::nullopt;
}

std::map<std::string, VideoLabel> parse_labels(std::string_view text) {
  std::map<std::string, VideoLabel> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    const auto where = "labels line " + std::to_string(line_no);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty()) {
      throw DataError(where + ": expected video_id,label[,split]");
    }
    VideoLabel v;
    if (fields[1] == "real" || fields[1] == "0") {
      v.label = 0;
    } else if (fields[1] == "fake" || fields[1] == "1") {
      v.label = 1;
    } else {
      throw DataError(where + ": unknown label '" + fields[1] + "'");
    }
    if (fields.size() == 3) {
      auto s = parse_split(fields[2]);
      if (!s) throw DataError(where + ": unknown split '" + fields[2] + "'");
      v.split = *s;
    }
    if (!out.emplace(fields[0], v).second) throw DataError(where + ": video '" + fields[0] + "' listed twice");
  }
  if (out.empty()) throw DataError("labels file lists no videos");
  return out;
}

std::map<std::string, VideoLabel> read_labels(const std::filesystem::path& path) {
  return parse_labels(read_text_file(path));
}

std::string video_id_of(const FrameIndexReport& report) {
  return std::filesystem::path(report.source).stem().string();
}

namespace {

Manifest select_frames(const std::filesystem::path& frames_dir, const std::map<std::string, VideoLabel>& labels,
                       const std::map<std::string, const FrameIndexReport*>& by_video, Regime regime,
                       const ManifestOptions& options, RandomSource rng) {
  Manifest out;
  for (const auto& [vid, lab] : labels) {
    const auto& report = *by_video.at(vid);
    auto make = [&](const FrameEntry& f, int copy) {
      ManifestEntry e;
      e.video_id = vid;
      e.frame_index = f.frame_index;
      e.frame_kind = f.kind;
      e.label = lab.label;
      e.split = lab.split;
      e.image_path = (frames_dir / "videos" / vid / (std::to_string(f.frame_index) + ".png")).string();
      e.augment_copy = copy;
      return e;
    };
    if (regime == Regime::N) {
      std::vector<FrameEntry> normal;
      for (const auto& f : report.entries) {
        if (f.kind == FrameKind::nonI) normal.push_back(f);
      }
      const std::size_t want =
          options.normal_per_video * (lab.label == 0 ? options.real_normal_multiplier : std::size_t{1});
      // Partial Fisher-Yates: the first `take` positions are a uniform draw.
      const std::size_t take = std::min(want, normal.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(normal[i], normal[i + rng.below(normal.size() - i)]);
      }
      normal.resize(take);
      std::sort(normal.begin(), normal.end(),
                [](const FrameEntry& a, const FrameEntry& b) { return a.frame_index < b.frame_index; });
      for (const auto& f : normal) out.push_back(make(f, 0));
    } else {
      const bool expand = regime == Regime::K_aug && lab.split == Split::train;
      const int copies = expand ? static_cast<int>(options.augment_copies) : 1;
      for (const auto& f : report.entries) {
        if (f.kind != FrameKind::I) continue;
        for (int c = 0; c < copies; ++c) out.push_back(make(f, c));
      }
    }
  }
  return out;
}

}  // namespace

Manifest balance_classes(Manifest manifest, RandomSource rng) {
  std::vector<bool> keep(manifest.size(), true);
  for (auto split : {Split::train, Split::val, Split::test}) {
    std::array<std::vector<std::size_t>, 2> idx;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (manifest[i].split == split) idx[manifest[i].label].push_back(i);
    }
    const std::size_t lo = std::min(idx[0].size(), idx[1].size());
    const std::size_t hi = std::max(idx[0].size(), idx[1].size());
    if (lo == 0 || hi * 10 <= lo * 11) continue;
    auto& major = idx[0].size() > idx[1].size() ? idx[0] : idx[1];
    rng.shuffle(major.begin(), major.end());
    for (std::size_t k = lo; k < major.size(); ++k) keep[major[k]] = false;
  }
  Manifest out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (keep[i]) out.push_back(std::move(manifest[i]));
  }
  return out;
}

Manifest build_manifest(const std::filesystem::path& frames_dir, const std::map<std::string, VideoLabel>& labels,
                        const std::vector<FrameIndexReport>& reports, const ManifestOptions& options,
                        const RandomSource& rng) {
  if (labels.empty()) throw DataError("no labels given");
  std::map<std::string, const FrameIndexReport*> by_video;
  for (const auto& r : reports) by_video[video_id_of(r)] = &r;
  for (const auto& [vid, lab] : labels) {
    if (!by_video.count(vid)) throw DataError("no keyframe report for video '" + vid + "'");
  }

  // K and N each draw from their own stream, so K_plus_N is exactly the union
  // of the two standalone regimes.
  auto one = [&](Regime regime, std::uint64_t salt) {
    auto m = select_frames(frames_dir, labels, by_video, regime, options, rng.fork(salt));
    return options.balance ? balance_classes(std::move(m), rng.fork(salt + 100)) : m;
  };
  Manifest out;
  switch (options.regime) {
    case Regime::K: out = one(Regime::K, 1); break;
    case Regime::K_aug: out = one(Regime::K_aug, 3); break;
    case Regime::N: out = one(Regime::N, 2); break;
    case Regime::K_plus_N: {
      out = one(Regime::K, 1);
      auto n = one(Regime::N, 2);
      out.insert(out.end(), n.begin(), n.end());
      std::stable_sort(out.begin(), out.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
        return std::tie(a.video_id, a.frame_index) < std::tie(b.video_id, b.frame_index);
      });
      break;
    }
  }
  if (out.empty()) throw DataError("regime " + std::string(regime_name(options.regime)) + " selected no frames");
  if (options.check_files) {
    for (const auto& e : out) {
      if (!std::filesystem::exists(e.image_path)) throw DataError("missing frame image " + e.image_path);
    }
  }
  require_unique(out);
  return out;
}

std::string manifest_to_jsonl(const Manifest& manifest) {
  std::string out;
  for (const auto& e : manifest) {
    nlohmann::ordered_json j;
    j["video_id"] = e.video_id;
    j["frame_index"] = e.frame_index;
    j["frame_kind"] = std::string(frame_kind_name(e.frame_kind));
    j["label"] = e.label;
    j["split"] = std::string(split_name(e.split));
    j["image_path"] = e.image_path;
    j["augment_copy"] = e.augment_copy;
    out += j.dump() + "\n";
  }
  return out;
}

Manifest manifest_from_jsonl(std::string_view text) {
  Manifest out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = "manifest line " + std::to_string(line_no);
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.video_id = j.at("video_id").get<std::string>();
      e.frame_index = j.at("frame_index").get<std::size_t>();
      const auto kind = j.at("frame_kind").get<std::string>();
      if (kind != "I" && kind != "nonI") throw DataError(where + ": unknown frame_kind '" + kind + "'");
      e.frame_kind = kind == "I" ? FrameKind::I : FrameKind::nonI;
      e.label = j.at("label").get<int>();
      if (e.label != 0 && e.label != 1) throw DataError(where + ": label must be 0 or 1");
      auto split = parse_split(j.at("split").get<std::string>());
      if (!split) throw DataError(where + ": unknown split");
      e.split = *split;
      e.image_path = j.at("image_path").get<std::string>();
      e.augment_copy = j.value("augment_copy", 0);
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(where + ": " + ex.what());
    }
  }
  require_unique(out);
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) { return manifest_from_jsonl(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dcpt

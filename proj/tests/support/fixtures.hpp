#pragma once

// Byte-level video fixtures, synthetic images and scratch directories shared
// by the unit tests and the acceptance runner.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcpt/random.hpp"
#include "dcpt/tensor.hpp"

namespace fixtures {

using Bytes = std::vector<std::uint8_t>;

/// ftyp | mdat | moov(mvhd, trak(tkhd, mdia(mdhd, hdlr vide, minf(vmhd, stbl(stsd, stts, stsz[, stss]))))).
/// moov is last, so any truncation removes part of a declared box.
/// stss entries are 1-based sample numbers. A leading audio trak is added
/// when `with_audio_track` is set.
Bytes make_mp4(std::uint32_t samples, const std::optional<std::vector<std::uint32_t>>& stss,
               bool with_audio_track = false, bool large_size_mdat = false);

/// SPS, PPS, then one access unit per frame. IDR frames use NAL type 5,
/// others type 1. Each frame is split into `slices_per_frame` slices with
/// first_mb_in_slice 0, 1, ... Payloads contain emulation-prevention bytes.
Bytes make_annexb(std::size_t frames, const std::vector<std::size_t>& idr_frames, std::size_t slices_per_frame = 1,
                  bool four_byte_start_codes = true);

void write_bytes(const std::filesystem::path& path, const Bytes& bytes);

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Separable toy images [3, S, S]: a bright centre patch on a noisy dark
/// background for label 1, a dark patch on a noisy bright background for 0.
template <typename T>
dcpt::Tensor<T> patch_image(std::size_t side, int label, dcpt::RandomSource& rng);

/// Writes videos/<id>/<frame>.png for every frame of every video, using
/// patch_image with the video's label.
void write_frame_corpus(const std::filesystem::path& frames_dir, const std::vector<std::string>& video_ids,
                        const std::vector<int>& labels, std::size_t frames_per_video, std::size_t side,
                        std::uint64_t seed);

/// Random tensor with entries in [lo, hi).
template <typename T>
dcpt::Tensor<T> random_tensor(const dcpt::Shape& shape, dcpt::RandomSource& rng, double lo = -1.0, double hi = 1.0,
                              bool requires_grad = false);

}  // namespace fixtures

namespace oracle {

/// Loop-nest cross-correlation with zero padding. x [B, C, H, W], w [O, C, k, k].
dcpt::Tensor<double> conv2d(const dcpt::Tensor<double>& x, const dcpt::Tensor<double>& w,
                            const dcpt::Tensor<double>* bias, std::size_t stride, std::size_t pad);

/// Per-head scaled dot-product attention written as explicit loops over
/// batch, head, query, key and channel. q, k, v: [B, T, c] -> [B, T, c].
dcpt::Tensor<double> attention(const dcpt::Tensor<double>& q, const dcpt::Tensor<double>& k,
                               const dcpt::Tensor<double>& v, std::size_t heads);

/// Mann-Whitney statistic by counting all (fake, real) pairs.
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace oracle

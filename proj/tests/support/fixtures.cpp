#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dcpt/image.hpp"

namespace fixtures {

namespace {

void put32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void put64(Bytes& b, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

Bytes box(const char* type, const Bytes& payload) {
  Bytes b;
  put32(b, static_cast<std::uint32_t>(payload.size() + 8));
  b.insert(b.end(), type, type + 4);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

Bytes large_box(const char* type, const Bytes& payload) {
  Bytes b;
  put32(b, 1);
  b.insert(b.end(), type, type + 4);
  put64(b, payload.size() + 16);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

Bytes cat(std::initializer_list<Bytes> parts) {
  Bytes out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Bytes full_box_payload(std::initializer_list<std::uint32_t> words) {
  Bytes b;
  put32(b, 0);  // version + flags
  for (auto w : words) put32(b, w);
  return b;
}

Bytes hdlr(const char* handler) {
  Bytes p;
  put32(p, 0);
  put32(p, 0);  // pre_defined
  p.insert(p.end(), handler, handler + 4);
  for (int i = 0; i < 12; ++i) p.push_back(0);
  p.push_back(0);  // empty name
  return box("hdlr", p);
}

Bytes track(const char* handler, std::uint32_t samples, const std::optional<std::vector<std::uint32_t>>& stss) {
  Bytes stsz_p = full_box_payload({0, samples});
  for (std::uint32_t i = 0; i < samples; ++i) put32(stsz_p, 100 + i);
  Bytes stbl_p = cat({box("stsd", full_box_payload({0})), box("stts", full_box_payload({1, samples, 512})),
                      box("stsz", stsz_p)});
  if (stss) {
    Bytes p = full_box_payload({static_cast<std::uint32_t>(stss->size())});
    for (auto s : *stss) put32(p, s);
    stbl_p = cat({stbl_p, box("stss", p)});
  }
  Bytes minf = box("minf", cat({box("vmhd", full_box_payload({0, 0})), box("stbl", stbl_p)}));
  Bytes mdia = box("mdia", cat({box("mdhd", full_box_payload({0, 0, 12800, samples * 512u, 0})), hdlr(handler), minf}));
  return box("trak", cat({box("tkhd", full_box_payload({0, 0, 1, 0, 0})), mdia}));
}

void put_bits(std::vector<bool>& bits, std::uint32_t value, int n) {
  for (int i = n - 1; i >= 0; --i) bits.push_back((value >> i) & 1u);
}

void put_ue(std::vector<bool>& bits, std::uint32_t v) {
  const std::uint32_t x = v + 1;
  int len = 0;
  while ((x >> len) > 1) ++len;
  for (int i = 0; i < len; ++i) bits.push_back(false);
  put_bits(bits, x, len + 1);
}

// Inserts 0x03 after any two zero bytes followed by a byte <= 3.
Bytes escape(const Bytes& rbsp) {
  Bytes out;
  int zeros = 0;
  for (auto b : rbsp) {
    if (zeros >= 2 && b <= 3) {
      out.push_back(3);
      zeros = 0;
    }
    out.push_back(b);
    zeros = b == 0 ? zeros + 1 : 0;
  }
  return out;
}

}  // namespace

Bytes make_mp4(std::uint32_t samples, const std::optional<std::vector<std::uint32_t>>& stss, bool with_audio_track,
               bool large_size_mdat) {
  Bytes ftyp_p{'i', 's', 'o', 'm', 0, 0, 2, 0, 'i', 's', 'o', 'm', 'a', 'v', 'c', '1'};
  Bytes mdat_p(64, 0xAB);
  Bytes moov_p = box("mvhd", full_box_payload({0, 0, 1000, 10000, 0x00010000}));
  if (with_audio_track) moov_p = cat({moov_p, track("soun", samples * 2, std::nullopt)});
  moov_p = cat({moov_p, track("vide", samples, stss)});
  return cat({box("ftyp", ftyp_p), large_size_mdat ? large_box("mdat", mdat_p) : box("mdat", mdat_p),
              box("moov", moov_p)});
}

Bytes make_annexb(std::size_t frames, const std::vector<std::size_t>& idr_frames, std::size_t slices_per_frame,
                  bool four_byte_start_codes) {
  Bytes out;
  auto start = [&] {
    if (four_byte_start_codes) out.push_back(0);
    out.insert(out.end(), {0, 0, 1});
  };
  start();
  out.insert(out.end(), {0x67, 0x42, 0x00, 0x1e, 0x95, 0xa0, 0x50});  // SPS
  start();
  out.insert(out.end(), {0x68, 0xce, 0x38, 0x80});  // PPS
  for (std::size_t f = 0; f < frames; ++f) {
    const bool idr = std::find(idr_frames.begin(), idr_frames.end(), f) != idr_frames.end();
    for (std::size_t s = 0; s < slices_per_frame; ++s) {
      std::vector<bool> bits;
      put_ue(bits, static_cast<std::uint32_t>(s * 40));  // first_mb_in_slice
      put_ue(bits, idr ? 7 : 5);                           // slice_type
      put_ue(bits, 0);                                     // pps id
      while (bits.size() % 8) bits.push_back(true);
      Bytes rbsp;
      for (std::size_t i = 0; i < bits.size(); i += 8) {
        std::uint8_t byte = 0;
        for (int k = 0; k < 8; ++k) byte = static_cast<std::uint8_t>((byte << 1) | bits[i + k]);
        rbsp.push_back(byte);
      }
      // Residual-like filler with zero runs that need escaping.
      rbsp.insert(rbsp.end(), {0x00, 0x00, 0x01, 0x9a, 0x00, 0x00, 0x00, 0x02, 0x5c, 0x80});
      start();
      out.push_back(idr ? 0x65 : 0x41);
      const auto esc = escape(rbsp);
      out.insert(out.end(), esc.begin(), esc.end());
    }
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ScratchDir::ScratchDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  dcpt::RandomSource rng(reinterpret_cast<std::uintptr_t>(this) ^ ++counter);
  path_ = std::filesystem::temp_directory_path() / ("dcpt-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007));
  std::filesystem::create_directories(path_);
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

template <typename T>
dcpt::Tensor<T> patch_image(std::size_t side, int label, dcpt::RandomSource& rng) {
  std::vector<T> data(3 * side * side);
  const double background = label == 1 ? 0.2 : 0.8;
  const double patch = label == 1 ? 0.95 : 0.05;
  const std::size_t lo = side / 4, hi = side - side / 4;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const bool in = y >= lo && y < hi && x >= lo && x < hi;
        const double v = (in ? patch : background) + rng.uniform(-0.05, 0.05);
        data[(c * side + y) * side + x] = static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return dcpt::Tensor<T>::from_data({3, side, side}, std::move(data));
}

template dcpt::Tensor<float> patch_image<float>(std::size_t, int, dcpt::RandomSource&);
template dcpt::Tensor<double> patch_image<double>(std::size_t, int, dcpt::RandomSource&);

void write_frame_corpus(const std::filesystem::path& frames_dir, const std::vector<std::string>& video_ids,
                        const std::vector<int>& labels, std::size_t frames_per_video, std::size_t side,
                        std::uint64_t seed) {
  dcpt::RandomSource rng(seed);
  for (std::size_t v = 0; v < video_ids.size(); ++v) {
    const auto dir = frames_dir / "videos" / video_ids[v];
    std::filesystem::create_directories(dir);
    for (std::size_t f = 0; f < frames_per_video; ++f) {
      const auto t = patch_image<double>(side, labels[v], rng);
      dcpt::Image im{side, side, 3, std::vector<std::uint8_t>(3 * side * side)};
      for (std::size_t i = 0; i < side * side; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
          im.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(t[c * side * side + i] * 255.0));
        }
      }
      dcpt::write_png(dir / (std::to_string(f) + ".png"), im);
    }
  }
}

template <typename T>
dcpt::Tensor<T> random_tensor(const dcpt::Shape& shape, dcpt::RandomSource& rng, double lo, double hi,
                              bool requires_grad) {
  std::vector<T> data(dcpt::shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return dcpt::Tensor<T>::from_data(shape, std::move(data), requires_grad);
}

template dcpt::Tensor<float> random_tensor<float>(const dcpt::Shape&, dcpt::RandomSource&, double, double, bool);
template dcpt::Tensor<double> random_tensor<double>(const dcpt::Shape&, dcpt::RandomSource&, double, double, bool);

}  // namespace fixtures

namespace oracle {

dcpt::Tensor<double> conv2d(const dcpt::Tensor<double>& x, const dcpt::Tensor<double>& w,
                            const dcpt::Tensor<double>* bias, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * O * OH * OW);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double s = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                s += x[((b * C + c) * H + iy) * W + ix] * w[((o * C + c) * K + ky) * K + kx];
              }
          out[((b * O + o) * OH + oy) * OW + ox] = s;
        }
  return dcpt::Tensor<double>::from_data({B, O, OH, OW}, std::move(out));
}

dcpt::Tensor<double> attention(const dcpt::Tensor<double>& q, const dcpt::Tensor<double>& k,
                               const dcpt::Tensor<double>& v, std::size_t heads) {
  const std::size_t B = q.dim(0), T = q.dim(1), C = q.dim(2), d = C / heads;
  std::vector<double> out(B * T * C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> logits(T);
        double mx = -1e300;
        for (std::size_t j = 0; j < T; ++j) {
          double s = 0;
          for (std::size_t e = 0; e < d; ++e) s += q[(b * T + i) * C + h * d + e] * k[(b * T + j) * C + h * d + e];
          logits[j] = s / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, logits[j]);
        }
        double z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < T; ++j)
          for (std::size_t e = 0; e < d; ++e)
            out[(b * T + i) * C + h * d + e] += logits[j] / z * v[(b * T + j) * C + h * d + e];
      }
  return dcpt::Tensor<double>::from_data({B, T, C}, std::move(out));
}

double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      twice += scores[i] > scores[j] ? 2 : scores[i] == scores[j] ? 1 : 0;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

}  // namespace oracle

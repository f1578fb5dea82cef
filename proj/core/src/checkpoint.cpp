#include "dcpt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dcpt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Kind = CheckpointError::Kind;

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  template <typename U>
  U get(const char* what) {
    U v;
    std::memcpy(&v, need(sizeof(U), what), sizeof(U));
    return v;
  }

  std::string get_string(std::size_t n, const char* what) { return std::string(need(n, what), n); }

  const char* need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Kind::truncated, source_ + ": truncated while reading " + what + " at byte " +
                                                 std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<char>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path) {
  std::string out = "DCPT";
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto config = model.config().to_json();
  put<std::uint64_t>(out, config.size());
  out += config;
  for (auto& nt : named_tensors<T>(model)) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out += nt.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) put<std::uint64_t>(out, d);
    for (auto v : nt.tensor.data()) put<float>(out, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::io, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError(Kind::io, "short write to checkpoint " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto source = path.string();
  Reader r(bytes, source);

  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DCPT", 4) != 0) {
    throw CheckpointError(Kind::bad_magic, source + ": not a checkpoint (bad magic)");
  }
  r.need(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::unsupported_version,
                          source + ": checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto config_len = r.get<std::uint64_t>("config length");
  const auto config_text = r.get_string(config_len, "config");

  CheckpointData data;
  try {
    data.config = ModelConfig::from_json(config_text, ModelConfig::full_scale());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::config_mismatch, source + ": stored config is invalid: " + e.what());
  }
  while (!r.at_end()) {
    CheckpointTensor t;
    const auto name_len = r.get<std::uint32_t>("name length");
    t.name = r.get_string(name_len, "tensor name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointError(Kind::truncated, source + ": implausible rank for " + t.name);
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0 || d > bytes.size()) throw CheckpointError(Kind::truncated, source + ": bad dimension for " + t.name);
      t.shape.push_back(d);
      numel *= d;
      if (numel > bytes.size()) throw CheckpointError(Kind::truncated, source + ": tensor " + t.name + " overruns file");
    }
    const char* p = r.need(numel * sizeof(float), "tensor values");
    t.values.resize(numel);
    std::memcpy(t.values.data(), p, numel * sizeof(float));
    data.tensors.push_back(std::move(t));
  }
  return data;
}

namespace {

template <typename T>
void fill_model(const CheckpointData& data, Model<T>& model, const std::string& source) {
  auto named = named_tensors<T>(model);
  // A file cut exactly between two tensors still parses; it shows up as a
  // strict prefix of the expected tensor list.
  if (data.tensors.size() < named.size() &&
      std::equal(data.tensors.begin(), data.tensors.end(), named.begin(),
                 [](const CheckpointTensor& a, const NamedTensor<T>& b) { return a.name == b.name; })) {
    throw CheckpointError(Kind::truncated, source + ": checkpoint ends after " + std::to_string(data.tensors.size()) +
                                               " of " + std::to_string(named.size()) + " tensors");
  }
  if (named.size() != data.tensors.size()) {
    throw CheckpointError(Kind::parameter_mismatch, source + ": checkpoint holds " +
                                                        std::to_string(data.tensors.size()) +
                                                        " tensors, model expects " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& stored = data.tensors[i];
    auto& target = named[i];
    if (stored.name != target.name || stored.shape != target.tensor.shape()) {
      throw CheckpointError(Kind::parameter_mismatch, source + ": tensor #" + std::to_string(i) + " is " +
                                                          stored.name + " " + shape_str(stored.shape) +
                                                          ", model expects " + target.name + " " +
                                                          shape_str(target.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto dst = named[i].tensor.mutable_data();
    const auto& src = data.tensors[i].values;
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<T>(src[k]);
  }
}

}  // namespace

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  auto data = read_checkpoint(path);
  Model<T> model(data.config, 0);
  fill_model(data, model, path.string());
  return model;
}

template <typename T>
void load_checkpoint_into(const std::filesystem::path& path, Model<T>& model) {
  auto data = read_checkpoint(path);
  if (!(data.config == model.config())) {
    throw CheckpointError(Kind::config_mismatch, path.string() + ": checkpoint config " + data.config.to_json() +
                                                     " does not match model config " + model.config().to_json());
  }
  fill_model(data, model, path.string());
}

template void save_checkpoint(Model<float>&, const std::filesystem::path&);
template void save_checkpoint(Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);
template void load_checkpoint_into(const std::filesystem::path&, Model<float>&);
template void load_checkpoint_into(const std::filesystem::path&, Model<double>&);

}  // namespace dcpt

#include "dcpt/model.hpp"

#include <json.hpp>

namespace dcpt {

ModelConfig ModelConfig::desk_scale() {
  ModelConfig c;
  c.extractor.input_size = 64;
  c.extractor.base_channels = 4;
  return c;
}

void ModelConfig::validate() const {
  extractor.validate();
  plan_phases(transformer, extractor.output_channels(), extractor.output_side());
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["image_size"] = extractor.input_size;
  j["in_channels"] = extractor.in_channels;
  j["base_channels"] = extractor.base_channels;
  j["group_layer_counts"] = extractor.group_layer_counts;
  j["total_layers"] = extractor.total_layers;
  j["phase_depths"] = transformer.phase_depths;
  j["phase_heads"] = transformer.phase_heads;
  j["lambda"] = transformer.lambda;
  j["ffn_ratio"] = transformer.ffn_ratio;
  j["ablation"] = std::string(ablation_name(transformer.ablation));
  j["num_classes"] = transformer.num_classes;
  j["precision"] = precision == Precision::f32 ? "f32" : "f64";
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text, const ModelConfig& base) {
  ModelConfig c = base;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    if (j.contains("image_size")) c.extractor.input_size = j.at("image_size").get<std::size_t>();
    if (j.contains("in_channels")) c.extractor.in_channels = j.at("in_channels").get<std::size_t>();
    if (j.contains("base_channels")) c.extractor.base_channels = j.at("base_channels").get<std::size_t>();
    if (j.contains("group_layer_counts")) {
      c.extractor.group_layer_counts = j.at("group_layer_counts").get<std::vector<std::size_t>>();
      std::size_t total = 0;
      for (auto n : c.extractor.group_layer_counts) total += n;
      c.extractor.total_layers = total;
    }
    if (j.contains("total_layers")) c.extractor.total_layers = j.at("total_layers").get<std::size_t>();
    if (j.contains("phase_depths")) c.transformer.phase_depths = j.at("phase_depths").get<std::array<std::size_t, 3>>();
    if (j.contains("phase_heads")) c.transformer.phase_heads = j.at("phase_heads").get<std::array<std::size_t, 3>>();
    if (j.contains("lambda")) c.transformer.lambda = j.at("lambda").get<double>();
    if (j.contains("ffn_ratio")) c.transformer.ffn_ratio = j.at("ffn_ratio").get<std::size_t>();
    if (j.contains("num_classes")) c.transformer.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("ablation")) {
      const auto name = j.at("ablation").get<std::string>();
      auto a = parse_ablation(name);
      if (!a) throw ConfigError("unknown ablation '" + name + "'");
      c.transformer.ablation = *a;
    }
    if (j.contains("precision")) {
      const auto p = j.at("precision").get<std::string>();
      if (p == "f32" || p == "float32") {
        c.precision = Precision::f32;
      } else if (p == "f64" || p == "float64") {
        c.precision = Precision::f64;
      } else {
        throw ConfigError("unknown precision '" + p + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      extractor_([&] {
        config.validate();
        RandomSource rng(seed);
        return FeatureExtractor<T>(config.extractor, rng);
      }()),
      transformer_([&] {
        RandomSource rng = RandomSource(seed).fork(1);
        return PoolingTransformer<T>(config.transformer, config.extractor.output_channels(),
                                     config.extractor.output_side(), rng);
      }()) {}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, Mode mode, ForwardTrace<T>* trace) {
  auto features = extractor_.forward(images, mode, trace ? &trace->group_activations : nullptr);
  if (trace) trace->features = features.shape();
  return transformer_.forward(features, mode, trace ? &trace->phases : nullptr);
}

template <typename T>
void Model<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  extractor_.visit(fn, join_name(prefix, "extractor"));
  transformer_.visit(fn, join_name(prefix, "transformer"));
}

template class Model<float>;
template class Model<double>;

}  // namespace dcpt

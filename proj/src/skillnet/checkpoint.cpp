#include "duskill/skillnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "duskill/error.hpp"
#include "duskill/nn/tensor_io.hpp"

namespace duskill::skillnet {

namespace {

constexpr int kFormatVersion = 1;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json shape_json(const nn::MlpShape& s) {
  nlohmann::json w = nlohmann::json::array();
  w.push_back(s.input);
  for (int v : s.hidden) w.push_back(v);
  w.push_back(s.output);
  return w;
}

std::vector<nn::NamedTensor> to_tensors(const nn::Mlp<float>& net) {
  std::vector<nn::NamedTensor> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    nn::NamedTensor tw{"layer" + std::to_string(l) + ".weight",
                       {static_cast<std::uint32_t>(w.rows()), static_cast<std::uint32_t>(w.cols())},
                       {}};
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) tw.data.push_back(w(r, c));
    const auto b = net.bias(l);
    nn::NamedTensor tb{"layer" + std::to_string(l) + ".bias", {static_cast<std::uint32_t>(b.size())},
                       std::vector<float>(b.data(), b.data() + b.size())};
    out.push_back(std::move(tw));
    out.push_back(std::move(tb));
  }
  return out;
}

nn::Mlp<float> from_tensors(const nn::MlpShape& shape, const std::vector<nn::NamedTensor>& tensors,
                            const std::string& name) {
  Rng unused(0);
  nn::Mlp<float> net(shape, unused);
  if (tensors.size() != 2 * net.num_layers())
    throw FileError("network '" + name + "' has " + std::to_string(tensors.size()) + " tensors, expected " +
                    std::to_string(2 * net.num_layers()));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& tw = tensors[2 * l];
    const auto& tb = tensors[2 * l + 1];
    auto w = net.weight(l);
    auto b = net.bias(l);
    if (tw.name != "layer" + std::to_string(l) + ".weight" || tw.shape.size() != 2 ||
        tw.shape[0] != static_cast<std::uint32_t>(w.rows()) || tw.shape[1] != static_cast<std::uint32_t>(w.cols()))
      throw FileError("network '" + name + "': bad weight tensor for layer " + std::to_string(l));
    if (tb.name != "layer" + std::to_string(l) + ".bias" || tb.shape.size() != 1 ||
        tb.shape[0] != static_cast<std::uint32_t>(b.size()))
      throw FileError("network '" + name + "': bad bias tensor for layer " + std::to_string(l));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = tw.data[i++];
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = tb.data[static_cast<std::size_t>(r)];
  }
  return net;
}

}  // namespace

std::uint64_t network_hash(const SkillModel<float>& model, const std::string& name) {
  return nn::hash_params(model.net(name).params());
}

std::uint64_t decoder_hash(const SkillModel<float>& model) {
  Fnv1a h;
  for (const auto& name : kDecoderNets) {
    if (!model.has(name)) continue;
    const auto v = network_hash(model, name);
    h.update(name.data(), name.size());
    h.update(&v, sizeof(v));
  }
  return h.digest();
}

void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  const auto& model = bundle.model;
  nlohmann::json nets = nlohmann::json::object();
  for (const auto& [name, net] : model.nets()) {
    const std::string file = name + ".bin";
    nn::write_tensor_file(dir / file, to_tensors(net));
    nets[name] = {{"shape", shape_json(net.shape())}, {"file", file}, {"hash", hex(nn::hash_params(net.params()))}};
  }
  nlohmann::json m = {{"format", kFormatVersion},
                      {"variant", to_string(model.config().variant)},
                      {"model", to_json(model.config())},
                      {"train", to_json(bundle.train)},
                      {"norm", datakit::to_json(bundle.norm)},
                      {"schedule", diffcore::to_json(model.config().schedule)},
                      {"step_count", bundle.step_count},
                      {"networks", nets}};
  nn::write_file_bytes(dir / "manifest.json", m.dump(2) + "\n");
}

BundlePtr load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(nn::read_file_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FileError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  try {
    if (m.at("format").get<int>() != kFormatVersion) throw FileError("unsupported checkpoint format");
    ModelConfig config = model_config_from_json(m.at("model"));
    if (diffcore::schedule_from_json(m.at("schedule")) != config.schedule)
      throw FileError("checkpoint schedule disagrees with its model config");
    std::map<std::string, nn::Mlp<float>> nets;
    for (const auto& [name, shape] : SkillModel<float>::shapes(config)) {
      if (!m.at("networks").contains(name)) throw FileError("checkpoint lacks network '" + name + "'");
      const auto& entry = m["networks"][name];
      auto net = from_tensors(shape, nn::read_tensor_file(dir / entry.at("file").get<std::string>()), name);
      if (entry.at("hash").get<std::string>() != hex(nn::hash_params(net.params())))
        throw FileError("network '" + name + "' does not match its recorded hash");
      nets.emplace(name, std::move(net));
    }
    auto b = std::make_shared<ModelBundle>();
    b->model = SkillModel<float>(config, std::move(nets));
    b->norm = datakit::norm_from_json(m.at("norm"));
    b->train = train_config_from_json(m.at("train"));
    b->step_count = m.at("step_count").get<long>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FileError("checkpoint manifest in " + dir.string() + " is missing fields: " + e.what());
  }
}

std::uint64_t checkpoint_hash(const std::filesystem::path& dir) {
  Fnv1a h;
  const std::string manifest = nn::read_file_bytes(dir / "manifest.json");
  h.update(manifest.data(), manifest.size());
  const auto m = nlohmann::json::parse(manifest);
  for (const auto& [name, entry] : m.at("networks").items()) {
    const std::string bytes = nn::read_file_bytes(dir / entry.at("file").get<std::string>());
    h.update(bytes.data(), bytes.size());
  }
  return h.digest();
}

}  // namespace duskill::skillnet

#include "dualglob/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dualglob/error.hpp"

namespace dualglob {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'G', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

json encoder_to_json(const nn::EncoderConfig& e) {
  json layers = json::array();
  for (const auto& l : e.layers) layers.push_back({l.out_channels, l.kernel, l.stride});
  return json{{"layers", layers},
              {"in_channels", e.in_channels},
              {"head_hidden", e.head_hidden},
              {"head_out", e.head_out}};
}

nn::EncoderConfig encoder_from_json(const json& j) {
  nn::EncoderConfig e;
  for (const auto& l : j.at("layers"))
    e.layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(), l.at(2).get<std::size_t>()});
  e.in_channels = j.at("in_channels").get<std::size_t>();
  e.head_hidden = j.at("head_hidden").get<std::size_t>();
  e.head_out = j.at("head_out").get<std::size_t>();
  e.validate();
  return e;
}

}  // namespace

template <typename T>
EncoderCheckpoint EncoderCheckpoint::capture(const nn::Model<T>& model) {
  EncoderCheckpoint ck;
  ck.encoder = model.config();
  ck.dtype = std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
  ck.names = model.parameter_names();
  for (const auto& p : model.parameters()) {
    ck.shapes.push_back(p.value().shape());
    ck.params.emplace_back(p.value().vec().begin(), p.value().vec().end());
  }
  return ck;
}

template <typename T>
nn::Model<T> EncoderCheckpoint::restore() const {
  nn::Model<T> model(encoder, 0);
  auto params_out = model.parameters();
  if (params_out.size() != params.size())
    throw ContractError("checkpoint holds " + std::to_string(params.size()) +
                        " parameter arrays, model expects " + std::to_string(params_out.size()));
  for (std::size_t k = 0; k < params_out.size(); ++k) {
    auto& dst = params_out[k].mutable_value();
    if (dst.shape() != shapes[k] || dst.size() != params[k].size())
      throw ContractError("checkpoint parameter " + names[k] + " has shape " +
                          nn::shape_str(shapes[k]) + ", model expects " + nn::shape_str(dst.shape()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(params[k][i]);
  }
  return model;
}

std::uint64_t EncoderCheckpoint::parameter_digest() const {
  std::string bytes;
  for (const auto& p : params)
    bytes.append(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double));
  return fnv1a64(bytes);
}

void save_checkpoint(const EncoderCheckpoint& ck, const std::filesystem::path& path) {
  json header{{"encoder", encoder_to_json(ck.encoder)},
              {"d_emb", ck.d_emb()},
              {"fold", ck.fold},
              {"epoch", ck.epoch},
              {"config_hash", ck.config_hash},
              {"dtype", std::string(to_string(ck.dtype))},
              {"loss_history", ck.loss_history},
              {"names", ck.names},
              {"shapes", ck.shapes}};
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t n = h.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : ck.params) {
    if (ck.dtype == Precision::f32) {
      std::vector<float> f(p.begin(), p.end());
      out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
  }
  if (!out) throw InputError("short write to " + path.string());
}

EncoderCheckpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash,
                                  bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || n > (std::uint64_t{1} << 32))
    throw InputError(path.string() + " is not an encoder checkpoint");
  std::string h(n, '\0');
  in.read(h.data(), static_cast<std::streamsize>(n));

  EncoderCheckpoint ck;
  try {
    const json header = json::parse(h);
    ck.encoder = encoder_from_json(header.at("encoder"));
    ck.fold = header.at("fold").get<int>();
    ck.epoch = header.at("epoch").get<int>();
    ck.config_hash = header.at("config_hash").get<std::string>();
    ck.dtype = parse_precision(header.at("dtype").get<std::string>());
    ck.loss_history = header.at("loss_history").get<std::vector<double>>();
    ck.names = header.at("names").get<std::vector<std::string>>();
    ck.shapes = header.at("shapes").get<std::vector<nn::Shape>>();
    if (header.at("d_emb").get<std::size_t>() != ck.d_emb())
      throw ContractError("checkpoint d_emb disagrees with its encoder layers");
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  if (ck.names.size() != ck.shapes.size())
    throw InputError(path.string() + ": names and shapes differ in count");

  if (!expected_hash.empty() && ck.config_hash != expected_hash && !force)
    throw ConfigError("checkpoint " + path.string() + " was trained under config " + ck.config_hash +
                      ", current config is " + expected_hash + " (use --force to override)");

  for (const auto& s : ck.shapes) {
    const std::size_t count = nn::shape_size(s);
    std::vector<double> p(count);
    if (ck.dtype == Precision::f32) {
      std::vector<float> f(count);
      in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(count * sizeof(float)));
      std::copy(f.begin(), f.end(), p.begin());
    } else {
      in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(count * sizeof(double)));
    }
    if (!in) throw InputError(path.string() + ": truncated parameter data");
    ck.params.push_back(std::move(p));
  }
  return ck;
}

template EncoderCheckpoint EncoderCheckpoint::capture<float>(const nn::Model<float>&);
template EncoderCheckpoint EncoderCheckpoint::capture<double>(const nn::Model<double>&);
template nn::Model<float> EncoderCheckpoint::restore<float>() const;
template nn::Model<double> EncoderCheckpoint::restore<double>() const;

}  // namespace dualglob

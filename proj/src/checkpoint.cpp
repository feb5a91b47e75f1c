#include "arl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace arl {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar.replace_extension(".json");
  if (sidecar == path) sidecar += ".json";
  return sidecar;
}

nlohmann::json hyper_to_json(const HyperParams& h) {
  return {{"variant", to_string(h.variant)}, {"q", h.q},           {"gamma1", h.gamma1},
          {"gamma2", h.gamma2},              {"t1", h.t1},         {"t2", h.t2},
          {"lambda", h.lambda},              {"d", h.d},           {"rce_A", h.rce_A}};
}

HyperParams hyper_from_json(const nlohmann::json& j) {
  HyperParams h;
  h.variant = parse_loss_variant(j.at("variant").get<std::string>());
  h.q = j.value("q", h.q);
  h.gamma1 = j.value("gamma1", h.gamma1);
  h.gamma2 = j.value("gamma2", h.gamma2);
  h.t1 = j.value("t1", h.t1);
  h.t2 = j.value("t2", h.t2);
  h.lambda = j.value("lambda", h.lambda);
  h.d = j.value("d", h.d);
  h.rce_A = j.value("rce_A", h.rce_A);
  h.validate();
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto flat = flatten(checkpoint.params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  for (double v : flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits = to_little_endian(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");

  nlohmann::json meta = {{"format", "float64-le"},
                         {"layer_sizes", checkpoint.params.sizes()},
                         {"activation", to_string(checkpoint.params.activation)},
                         {"parameter_count", flat.size()},
                         {"hyper", hyper_to_json(checkpoint.hyper)}};
  if (!checkpoint.extra.empty()) meta["extra"] = checkpoint.extra;
  std::ofstream side(checkpoint_sidecar(path));
  if (!side) throw IoError("cannot write checkpoint sidecar for '" + path.string() + "'");
  side << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto sidecar = checkpoint_sidecar(path);
  std::ifstream side(sidecar);
  if (!side) throw IoError("cannot read checkpoint sidecar '" + sidecar.string() + "'");
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint sidecar '" + sidecar.string() + "': " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::vector<double> flat;
  std::uint64_t bits;
  while (in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
    bits = to_little_endian(bits);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    flat.push_back(v);
  }
  if (in.gcount() != 0) throw IoError("checkpoint '" + path.string() + "' has a truncated value");

  Checkpoint cp;
  try {
    const auto expected = meta.at("parameter_count").get<std::size_t>();
    if (flat.size() != expected) {
      throw IoError("checkpoint '" + path.string() + "' holds " + std::to_string(flat.size()) +
                    " values, sidecar expects " + std::to_string(expected));
    }
    cp.params = unflatten(flat, meta.at("layer_sizes").get<std::vector<int>>(),
                          parse_activation(meta.at("activation").get<std::string>()));
    cp.hyper = hyper_from_json(meta.at("hyper"));
    if (meta.contains("extra")) cp.extra = meta["extra"];
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint sidecar '" + sidecar.string() + "': " + e.what());
  }
  return cp;
}

}  // namespace arl

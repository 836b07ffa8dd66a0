#include "sgil/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sgil/config.hpp"
#include "sgil/errors.hpp"

namespace sgil {
namespace {

constexpr char kMagic[8] = {'S', 'G', 'I', 'L', 'T', 'N', 'S', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void put_doubles(std::ofstream& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], 8);
    put_u64(out, bits);
  }
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw DataError("truncated tensor file: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8))
    throw DataError("truncated tensor file: " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_tensors(
    const std::string& path,
    const std::vector<std::pair<std::string, const DenseMatrix*>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write tensor file: " + path);
  out.write(kMagic, 8);
  put_u64(out, tensors.size());
  for (const auto& [name, mat] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, mat->rows());
    put_u64(out, mat->cols());
    put_doubles(out, mat->data().data(), mat->size());
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a tensor file: " + path);
  const std::uint64_t count = get_u64(in, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in, path);
    if (name_len > 4096) throw DataError("tensor name too long: " + path);
    std::string name(name_len, '\0');
    if (name_len && !in.read(name.data(), name_len))
      throw DataError("truncated tensor file: " + path);
    const std::uint64_t rows = get_u64(in, path);
    const std::uint64_t cols = get_u64(in, path);
    if (rows > (1ull << 32) || cols > (1ull << 32) ||
        (rows && cols > (1ull << 40) / rows))
      throw DataError("tensor shape out of range: " + path);
    DenseMatrix mat(static_cast<std::size_t>(rows),
                    static_cast<std::size_t>(cols));
    for (std::size_t j = 0; j < mat.size(); ++j) {
      const std::uint64_t bits = get_u64(in, path);
      double v;
      std::memcpy(&v, &bits, 8);
      mat.at_flat(j) = v;
    }
    out.emplace_back(std::move(name), std::move(mat));
  }
  return out;
}

void save_checkpoint(const std::string& prefix, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const DenseMatrix*>> tensors;
  tensors.emplace_back("P0", &ckpt.params.tables.P0);
  tensors.emplace_back("Q0", &ckpt.params.tables.Q0);
  for (std::size_t k = 0; k < ckpt.params.gens.size(); ++k) {
    const std::string p = "gen" + std::to_string(k) + ".";
    const EnvGeneratorParams& g = ckpt.params.gens[k];
    tensors.emplace_back(p + "W1", &g.W1);
    tensors.emplace_back(p + "b1", &g.b1);
    tensors.emplace_back(p + "W2", &g.W2);
    tensors.emplace_back(p + "b2", &g.b2);
  }
  for (std::size_t i = 0; i < ckpt.descent.slot_count(); ++i) {
    const AdamSlot& s = ckpt.descent.slot(i);
    tensors.emplace_back("descent.m." + s.name, &s.m);
    tensors.emplace_back("descent.v." + s.name, &s.v);
  }
  for (std::size_t i = 0; i < ckpt.ascent.slot_count(); ++i) {
    const AdamSlot& s = ckpt.ascent.slot(i);
    tensors.emplace_back("ascent.m." + s.name, &s.m);
    tensors.emplace_back("ascent.v." + s.name, &s.v);
  }
  save_tensors(prefix + ".tns", tensors);

  nlohmann::json j;
  j["format"] = "sgil-checkpoint-1";
  j["config"] = config_to_map(ckpt.config);
  j["epoch"] = ckpt.epoch;
  j["global_step"] = ckpt.global_step;
  j["best_metric"] = ckpt.best_metric;
  j["best_epoch"] = ckpt.best_epoch;
  j["descent_steps"] = ckpt.descent.step_count();
  j["ascent_steps"] = ckpt.ascent.step_count();
  std::ofstream out(prefix + ".json", std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint json: " + prefix + ".json");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + prefix + ".json");
}

Checkpoint load_checkpoint(const std::string& prefix) {
  nlohmann::json j;
  {
    std::ifstream in(prefix + ".json");
    if (!in) throw DataError("cannot open checkpoint json: " + prefix + ".json");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed checkpoint json " + prefix + ".json: " + e.what());
    }
  }
  Checkpoint ckpt;
  try {
    if (j.at("format").get<std::string>() != "sgil-checkpoint-1")
      throw DataError("unsupported checkpoint format in " + prefix + ".json");
    ConfigMap cmap;
    for (const auto& [key, value] : j.at("config").items())
      cmap[key] = value.get<std::string>();
    ckpt.config = config_from_map(cmap);
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.global_step = j.at("global_step").get<std::uint64_t>();
    ckpt.best_metric = j.at("best_metric").get<double>();
    ckpt.best_epoch = j.at("best_epoch").get<std::size_t>();
    ckpt.descent = Adam(AdamConfig{ckpt.config.lr, 0.9, 0.999, 1e-8});
    ckpt.ascent =
        Adam(AdamConfig{ckpt.config.effective_ascent_lr(), 0.9, 0.999, 1e-8});
    ckpt.descent.set_step_count(j.at("descent_steps").get<std::uint64_t>());
    ckpt.ascent.set_step_count(j.at("ascent_steps").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint json " + prefix + ".json: " + e.what());
  }

  std::map<std::string, DenseMatrix> by_name;
  for (NamedTensor& t : load_tensors(prefix + ".tns")) {
    if (by_name.count(t.first))
      throw DataError("duplicate tensor '" + t.first + "' in " + prefix + ".tns");
    by_name.emplace(std::move(t.first), std::move(t.second));
  }
  auto take = [&by_name, &prefix](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint " + prefix + ".tns is missing tensor '" + name + "'");
    DenseMatrix out = std::move(it->second);
    by_name.erase(it);
    return out;
  };

  ckpt.params.tables.P0 = take("P0");
  ckpt.params.tables.Q0 = take("Q0");
  const std::size_t n_gens =
      ckpt.config.no_env_gen ? 0 : ckpt.config.effective_k();
  ckpt.params.gens.resize(n_gens);
  for (std::size_t k = 0; k < n_gens; ++k) {
    const std::string p = "gen" + std::to_string(k) + ".";
    ckpt.params.gens[k].W1 = take(p + "W1");
    ckpt.params.gens[k].b1 = take(p + "b1");
    ckpt.params.gens[k].W2 = take(p + "W2");
    ckpt.params.gens[k].b2 = take(p + "b2");
  }

  // Slots mirror Trainer registration order: P0, Q0, then each generator.
  std::vector<std::pair<std::string, const DenseMatrix*>> descent_params;
  descent_params.emplace_back("P0", &ckpt.params.tables.P0);
  descent_params.emplace_back("Q0", &ckpt.params.tables.Q0);
  std::vector<std::pair<std::string, const DenseMatrix*>> ascent_params;
  for (std::size_t k = 0; k < n_gens; ++k) {
    const std::string p = "gen" + std::to_string(k) + ".";
    const EnvGeneratorParams& g = ckpt.params.gens[k];
    descent_params.emplace_back(p + "W1", &g.W1);
    descent_params.emplace_back(p + "b1", &g.b1);
    descent_params.emplace_back(p + "W2", &g.W2);
    descent_params.emplace_back(p + "b2", &g.b2);
    ascent_params.emplace_back(p + "W1", &g.W1);
    ascent_params.emplace_back(p + "b1", &g.b1);
    ascent_params.emplace_back(p + "W2", &g.W2);
    ascent_params.emplace_back(p + "b2", &g.b2);
  }
  auto restore = [&take, &prefix](Adam& opt, const char* tag,
                                  const std::vector<std::pair<std::string, const DenseMatrix*>>& plist) {
    for (const auto& [name, param] : plist) {
      const std::size_t i = opt.add_param(name, param->rows(), param->cols());
      DenseMatrix m = take(std::string(tag) + ".m." + name);
      DenseMatrix v = take(std::string(tag) + ".v." + name);
      if (!m.same_shape(*param) || !v.same_shape(*param))
        throw DataError("optimizer moment shape mismatch for '" + name + "' in " + prefix + ".tns");
      opt.slot(i).m = std::move(m);
      opt.slot(i).v = std::move(v);
    }
  };
  restore(ckpt.descent, "descent", descent_params);
  restore(ckpt.ascent, "ascent", ascent_params);
  if (!by_name.empty())
    throw DataError("checkpoint " + prefix + ".tns has unexpected tensor '" +
                    by_name.begin()->first + "'");
  return ckpt;
}

}  // namespace sgil
